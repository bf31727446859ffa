"""Collective spin states in the symmetric (Dicke) manifold of N spin-1/2 particles.

Basis convention: index k holds the amplitude of |S, m = S - k>, S = N/2, so
index 0 is the fully up-polarized state along z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

NORM_TOL = 1e-10
DEGENERATE_SIGNAL = 1e-12


class DegenerateSignalError(ValueError):
    """Raised when the mean spin is too short to define a squeezing parameter."""


@dataclass(frozen=True)
class DickeState:
    n_particles: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if self.n_particles < 1:
            raise ValueError(f"n_particles must be >= 1, got {self.n_particles}")
        if amps.shape != (self.n_particles + 1,):
            raise ValueError(
                f"expected {self.n_particles + 1} amplitudes, got shape {amps.shape}"
            )
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def spin(self) -> float:
        return self.n_particles / 2

    @property
    def m_values(self) -> np.ndarray:
        return m_values(self.n_particles)

    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def overlap(self, other: "DickeState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def with_amplitudes(self, amplitudes) -> "DickeState":
        return DickeState(self.n_particles, amplitudes)


@dataclass(frozen=True)
class SpinExpectations:
    mean: np.ndarray
    second_moments: np.ndarray

    @property
    def covariance(self) -> np.ndarray:
        return self.second_moments - np.outer(self.mean, self.mean)


@dataclass(frozen=True)
class SqueezingReport:
    xi2: float
    v_min: float
    optimal_angle: float
    mean_spin_len: float
    mean: tuple[float, float, float] = (0.0, 0.0, 0.0)


def m_values(n_particles: int) -> np.ndarray:
    return n_particles / 2 - np.arange(n_particles + 1)


def raising_elements(n_particles: int) -> np.ndarray:
    """<k-1| S_+ |k> for k = 1..N (length N)."""
    s = n_particles / 2
    m = m_values(n_particles)[1:]
    return np.sqrt(np.maximum(s * (s + 1) - m * (m + 1), 0.0))


def sx_tridiagonal(n_particles: int) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of S_x in the S_z basis (real symmetric)."""
    return np.zeros(n_particles + 1), 0.5 * raising_elements(n_particles)


def operator_matrices(n_particles: int) -> dict[str, np.ndarray]:
    """Dense S_x, S_y, S_z. Only meant for small N (tests, oracles)."""
    sp = np.diag(raising_elements(n_particles).astype(complex), 1)
    sx = (sp + sp.conj().T) / 2
    sy = (sp - sp.conj().T) / 2j
    sz = np.diag(m_values(n_particles)).astype(complex)
    return {"x": sx, "y": sy, "z": sz}


def make_coherent_x(n_particles: int) -> DickeState:
    """Coherent spin state polarized along +x (the S_x-maximal eigenstate)."""
    if n_particles < 1:
        raise ValueError(f"need at least one particle, got N={n_particles}")
    k = np.arange(n_particles + 1)
    # sqrt(binom(N, k)) / 2^(N/2), in log space so large N does not overflow
    log_amp = 0.5 * (
        gammaln(n_particles + 1) - gammaln(k + 1) - gammaln(n_particles - k + 1)
    ) - 0.5 * n_particles * np.log(2.0)
    amps = np.exp(log_amp)
    amps /= np.linalg.norm(amps)
    return DickeState(n_particles, amps.astype(complex))


def make_polarized_z(n_particles: int) -> DickeState:
    """|m = S>, the starting point for two-axis twisting."""
    if n_particles < 1:
        raise ValueError(f"need at least one particle, got N={n_particles}")
    amps = np.zeros(n_particles + 1, dtype=complex)
    amps[0] = 1.0
    return DickeState(n_particles, amps)


def random_state(n_particles: int, rng: np.random.Generator) -> DickeState:
    amps = rng.normal(size=n_particles + 1) + 1j * rng.normal(size=n_particles + 1)
    return DickeState(n_particles, amps / np.linalg.norm(amps))


def moments(n_particles: int, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First and symmetrized second moments of S from raw amplitudes."""
    s = n_particles / 2
    m = m_values(n_particles)
    a = raising_elements(n_particles)
    p = np.abs(psi) ** 2

    sz = float(np.dot(p, m))
    szz = float(np.dot(p, m * m))
    # <S_+> = sum_k conj(psi_{k-1}) a_k psi_k
    s_plus = np.vdot(psi[:-1], a * psi[1:])
    # <S_+^2> = sum_k conj(psi_{k-2}) a_{k-1} a_k psi_k
    s_plus2 = np.vdot(psi[:-2], a[:-1] * a[1:] * psi[2:]) if n_particles >= 2 else 0j
    # <S_+ S_z + S_z S_+>
    s_plus_z = np.vdot(psi[:-1], a * (m[1:] + m[:-1]) * psi[1:])

    transverse = s * (s + 1) - szz
    sxx = 0.5 * (transverse + s_plus2.real)
    syy = 0.5 * (transverse - s_plus2.real)
    sxy = 0.5 * s_plus2.imag
    sxz = 0.5 * s_plus_z.real
    syz = 0.5 * s_plus_z.imag

    mean = np.array([s_plus.real, s_plus.imag, sz])
    second = np.array(
        [
            [sxx, sxy, sxz],
            [sxy, syy, syz],
            [sxz, syz, szz],
        ]
    )
    return mean, second


def expectations(state: DickeState) -> SpinExpectations:
    mean, second = moments(state.n_particles, state.amplitudes)
    return SpinExpectations(mean=mean, second_moments=second)


def transverse_frame(direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal pair spanning the plane perpendicular to ``direction``.

    For a mean spin along +x this returns (z, y), so the reported angle phi
    measures the direction cos(phi) S_z + sin(phi) S_y.
    """
    n = direction / np.linalg.norm(direction)
    z = np.array([0.0, 0.0, 1.0])
    e1 = z - np.dot(z, n) * n
    if np.linalg.norm(e1) < 1e-9:
        x = np.array([1.0, 0.0, 0.0])
        e1 = x - np.dot(x, n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e1, n)
    return e1, e2


def squeezing_from_moments(
    n_particles: int, mean: np.ndarray, second: np.ndarray
) -> SqueezingReport:
    length = float(np.linalg.norm(mean))
    if length <= DEGENERATE_SIGNAL:
        raise DegenerateSignalError(f"mean spin length {length:.3e} is degenerate")
    e1, e2 = transverse_frame(mean)
    a = e1 @ second @ e1
    c = e2 @ second @ e2
    b = e1 @ second @ e2
    half_gap = np.hypot(0.5 * (a - c), b)
    v_min = 0.5 * (a + c) - half_gap
    # major axis sits at 0.5*atan2(2b, a-c); minor axis is perpendicular to it
    angle = (0.5 * np.arctan2(2 * b, a - c) + np.pi / 2) % np.pi
    return SqueezingReport(
        xi2=n_particles * v_min / length**2,
        v_min=float(v_min),
        optimal_angle=float(angle),
        mean_spin_len=length,
        mean=tuple(float(v) for v in mean),
    )


def squeezing_parameter(state: DickeState) -> SqueezingReport:
    """Wineland-style squeezing: N * (minimal transverse <S_n^2>) / |<S>|^2.

    The minimization runs over directions perpendicular to the mean spin;
    along those directions <S_n> = 0, so the second moment is the variance.
    """
    mean, second = moments(state.n_particles, state.amplitudes)
    return squeezing_from_moments(state.n_particles, mean, second)
