"""Exact unitary evolution in the Dicke manifold.

Time is measured in units of 1/chi (chi = chi_2 = 1). Rotations use
R_x(phi) = exp(-i phi S_x), whose adjoint action maps S_z to
cos(phi) S_z + sin(phi) S_y.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .spin import (
    DickeState,
    SqueezingReport,
    m_values,
    make_coherent_x,
    raising_elements,
    squeezing_parameter,
    sx_tridiagonal,
)
from .tridiag import eigh_tridiag, realify_hermitian_tridiagonal

SAMPLE_TOL = 1e-12


def canonical_theta(theta: float) -> float:
    """Map theta onto [-pi/2, pi/2); S_theta^2 is pi-periodic in theta."""
    return (theta + math.pi / 2) % math.pi - math.pi / 2


@dataclass(frozen=True)
class TwistSegment:
    theta: float
    duration: float

    def __post_init__(self):
        if not self.duration >= 0:
            raise ValueError(f"segment duration must be >= 0, got {self.duration}")
        object.__setattr__(self, "theta", canonical_theta(float(self.theta)))
        object.__setattr__(self, "duration", float(self.duration))


@dataclass(frozen=True)
class Protocol:
    """Ordered twist segments in the effective frame, applied first to last."""

    segments: tuple[TwistSegment, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("a protocol needs at least one segment")
        if segs[0].theta != 0.0:
            raise ValueError("first segment must twist about z (theta_1 = 0)")
        object.__setattr__(self, "segments", segs)

    @property
    def n_steps(self) -> int:
        return len(self.segments)

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def thetas(self) -> list[float]:
        return [s.theta for s in self.segments]

    @property
    def durations(self) -> list[float]:
        return [s.duration for s in self.segments]

    def to_params(self) -> np.ndarray:
        """Flat (T_1, theta_2, T_2, ..., theta_n, T_n)."""
        out = [self.segments[0].duration]
        for seg in self.segments[1:]:
            out += [seg.theta, seg.duration]
        return np.array(out)

    @classmethod
    def from_params(cls, params: Sequence[float]) -> "Protocol":
        params = list(params)
        if len(params) % 2 != 1:
            raise ValueError(f"expected 2n-1 parameters, got {len(params)}")
        segs = [TwistSegment(0.0, params[0])]
        for j in range(1, len(params), 2):
            segs.append(TwistSegment(params[j], params[j + 1]))
        return cls(tuple(segs))

    @classmethod
    def oat(cls, duration: float) -> "Protocol":
        return cls((TwistSegment(0.0, duration),))


@dataclass(frozen=True)
class Pulse:
    alpha: float
    duration: float

    def __post_init__(self):
        if not self.duration >= 0:
            raise ValueError(f"pulse duration must be >= 0, got {self.duration}")


@dataclass(frozen=True)
class PulseSequence:
    """Lab-frame sequence: rotate about x by alpha, then twist under S_z^2."""

    pulses: tuple[Pulse, ...] = ()

    @property
    def total_duration(self) -> float:
        return float(sum(p.duration for p in self.pulses))


# --------------------------------------------------------------------------
# decomposition caches


class _DecompositionCache:
    """Thread-safe LRU keyed exactly, bounded by total array bytes."""

    def __init__(self, max_bytes: int):
        self.max_bytes = max_bytes
        self._items: OrderedDict = OrderedDict()
        self._bytes = 0
        self._lock = threading.Lock()

    @classmethod
    def _size(cls, value) -> int:
        if isinstance(value, tuple):
            return sum(cls._size(v) for v in value)
        return getattr(value, "nbytes", 0)

    def get(self, key, build: Callable[[], tuple]):
        with self._lock:
            if key in self._items:
                self._items.move_to_end(key)
                return self._items[key]
        value = build()
        size = self._size(value)
        with self._lock:
            if key not in self._items:
                self._items[key] = value
                self._bytes += size
                while self._bytes > self.max_bytes and len(self._items) > 1:
                    _, old = self._items.popitem(last=False)
                    self._bytes -= self._size(old)
            return self._items[key]

    def clear(self):
        with self._lock:
            self._items.clear()
            self._bytes = 0


_SX_CACHE = _DecompositionCache(max_bytes=1 << 30)
_TWIST_CACHE = _DecompositionCache(max_bytes=1 << 29)
_TAT_CACHE = _DecompositionCache(max_bytes=1 << 29)


def clear_caches():
    for cache in (_SX_CACHE, _TWIST_CACHE, _TAT_CACHE):
        cache.clear()


def sx_eigensystem(n_particles: int) -> tuple[np.ndarray, np.ndarray]:
    def build():
        return eigh_tridiag(*sx_tridiagonal(n_particles))

    return _SX_CACHE.get(n_particles, build)


def twist_axis_tridiagonal(n_particles: int, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """S_theta = cos(theta) S_z + sin(theta) S_y as Hermitian tridiagonal (diag, upper)."""
    diag = math.cos(theta) * m_values(n_particles)
    # <k| S_y |k+1> = -i a_k / 2
    upper = -0.5j * math.sin(theta) * raising_elements(n_particles)
    return diag, upper


def twist_eigensystem(n_particles: int, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and (complex) eigenvectors of S_theta, memoized per (N, theta)."""

    def build():
        diag, upper = twist_axis_tridiagonal(n_particles, theta)
        d, e, gauge = realify_hermitian_tridiagonal(diag, upper)
        values, vectors = eigh_tridiag(d, e)
        return values, gauge[:, None] * vectors

    return _TWIST_CACHE.get((n_particles, float(theta)), build)


def tat_eigensystem(n_particles: int) -> tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...]:
    """Eigensystems of S_x^2 - S_y^2 = (S_+^2 + S_-^2)/2 on each k-parity block.

    The operator only couples k to k +/- 2, so each block is tridiagonal.
    Returns [(indices, values, vectors), ...].
    """

    def build():
        a = raising_elements(n_particles)
        # <k| S_+^2 |k+2> = a_k a_{k+1}
        couplings = 0.5 * a[:-1] * a[1:]
        blocks = []
        for start in (0, 1):
            idx = np.arange(start, n_particles + 1, 2)
            off = couplings[idx[:-1]]
            values, vectors = eigh_tridiag(np.zeros(idx.size), off)
            blocks.append((idx, values, vectors))
        return tuple(blocks)

    return _TAT_CACHE.get(n_particles, build)


# --------------------------------------------------------------------------
# elementary propagators


def _apply_spectral(vectors: np.ndarray, phases: np.ndarray, psi: np.ndarray) -> np.ndarray:
    return vectors @ (phases * (vectors.conj().T @ psi))


def rotate_x(state: DickeState, alpha: float) -> DickeState:
    """Apply exp(-i alpha S_x)."""
    if alpha == 0.0:
        return state
    values, vectors = sx_eigensystem(state.n_particles)
    psi = _apply_spectral(vectors, np.exp(-1j * alpha * values), state.amplitudes)
    return state.with_amplitudes(psi)


def twist_z(state: DickeState, duration: float) -> DickeState:
    """Apply exp(-i S_z^2 T), diagonal in the Dicke basis."""
    if duration < 0:
        raise ValueError(f"duration must be >= 0, got {duration}")
    m = state.m_values
    return state.with_amplitudes(np.exp(-1j * duration * m * m) * state.amplitudes)


def evolve_twist(
    state: DickeState, theta: float, duration: float, method: str = "diagonalize"
) -> DickeState:
    """Apply exp(-i S_theta^2 T) with S_theta = cos(theta) S_z + sin(theta) S_y.

    ``method="diagonalize"`` diagonalizes S_theta directly (gauge-realified
    tridiagonal); ``method="rotated"`` conjugates the diagonal S_z^2 evolution
    with x rotations. The two agree to rounding.
    """
    if duration < 0:
        raise ValueError(f"duration must be >= 0, got {duration}")
    if duration == 0.0:
        return state
    if method == "diagonalize":
        if theta == 0.0:
            return twist_z(state, duration)
        values, vectors = twist_eigensystem(state.n_particles, theta)
        phases = np.exp(-1j * duration * values * values)
        return state.with_amplitudes(_apply_spectral(vectors, phases, state.amplitudes))
    if method == "rotated":
        # R(phi)^dagger S_z R(phi) = S_phi, so exp(-i S_theta^2 T) = R(-theta) D(T) R(theta)
        return rotate_x(twist_z(rotate_x(state, theta), duration), -theta)
    raise ValueError(f"unknown evolve_twist method {method!r}")


def evolve_tat(state: DickeState, duration: float) -> DickeState:
    """Apply exp(-i (S_x^2 - S_y^2) T)."""
    if duration < 0:
        raise ValueError(f"duration must be >= 0, got {duration}")
    if duration == 0.0:
        return state
    psi = state.amplitudes
    out = np.empty_like(psi)
    for idx, values, vectors in tat_eigensystem(state.n_particles):
        out[idx] = vectors @ (np.exp(-1j * duration * values) * (vectors.T @ psi[idx]))
    return state.with_amplitudes(out)


# --------------------------------------------------------------------------
# protocols


def _check_samples(sample_times, total: float) -> np.ndarray:
    times = np.asarray(sample_times, dtype=float)
    if times.size and (times.min() < 0 or times.max() > total + SAMPLE_TOL):
        raise ValueError(
            f"sample times must lie in [0, {total}], got [{times.min()}, {times.max()}]"
        )
    return times


def _segment_samples(times: np.ndarray, start: float, end: float, taken: np.ndarray):
    hit = (~taken) & (times >= start - SAMPLE_TOL) & (times <= end + SAMPLE_TOL)
    return np.flatnonzero(hit)


def run_protocol(
    n_particles: int,
    protocol: Protocol,
    sample_times: Sequence[float] | None = None,
) -> tuple[DickeState, list[tuple[float, SqueezingReport]] | None]:
    """Evolve the +x coherent state through ``protocol`` in the effective frame.

    With ``sample_times`` the squeezing report is also recorded at each
    requested time, splitting segments where needed.
    """
    state = make_coherent_x(n_particles)
    if sample_times is None:
        for seg in protocol.segments:
            state = evolve_twist(state, seg.theta, seg.duration)
        return state, None

    times = _check_samples(sample_times, protocol.total_duration)
    reports: list = [None] * times.size
    taken = np.zeros(times.size, dtype=bool)
    start = 0.0
    for seg in protocol.segments:
        end = start + seg.duration
        hits = _segment_samples(times, start, end, taken)
        if hits.size:
            if seg.theta == 0.0:
                m2 = state.m_values ** 2
                for i in hits:
                    tau = max(times[i] - start, 0.0)
                    partial = state.with_amplitudes(np.exp(-1j * tau * m2) * state.amplitudes)
                    reports[i] = squeezing_parameter(partial)
            else:
                values, vectors = twist_eigensystem(n_particles, seg.theta)
                coeffs = vectors.conj().T @ state.amplitudes
                for i in hits:
                    tau = max(times[i] - start, 0.0)
                    psi = vectors @ (np.exp(-1j * tau * values**2) * coeffs)
                    reports[i] = squeezing_parameter(state.with_amplitudes(psi))
            taken[hits] = True
        state = evolve_twist(state, seg.theta, seg.duration)
        start = end
    return state, [(float(t), r) for t, r in zip(times, reports)]


def protocol_to_pulses(protocol: Protocol) -> PulseSequence:
    pulses = []
    previous = 0.0
    for seg in protocol.segments:
        pulses.append(Pulse(alpha=seg.theta - previous, duration=seg.duration))
        previous = seg.theta
    return PulseSequence(tuple(pulses))


def run_pulses(n_particles: int, pulses: PulseSequence) -> DickeState:
    """Lab-frame execution: each pulse rotates about x, then twists under S_z^2.

    The result differs from ``run_protocol`` on the matching protocol by the
    rotation R_x(-theta_n), which leaves the squeezing parameter unchanged.
    """
    state = make_coherent_x(n_particles)
    for pulse in pulses.pulses:
        state = twist_z(rotate_x(state, pulse.alpha), pulse.duration)
    return state
