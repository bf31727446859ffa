"""Parity-reduced lab-frame evaluator used inside the optimizer.

Every state reachable from the +x coherent state by x rotations and S_z^2
twisting is symmetric under m -> -m (that reflection commutes with S_x and
S_z^2). Working in the symmetric subspace halves the dimension, so each basis
change between the S_z and S_x eigenbases costs a quarter of the full one.
The S_x eigenbasis is diagonalized once per N; afterwards a pulse costs two
real matrix products and a twist is a diagonal phase.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .propagate import PulseSequence, SAMPLE_TOL, _DecompositionCache
from .spin import (
    DickeState,
    SqueezingReport,
    make_coherent_x,
    moments,
    raising_elements,
    squeezing_from_moments,
)
from .tridiag import eigh_tridiag

_ENGINES = _DecompositionCache(max_bytes=2 << 30)


class ReducedEngine:
    def __init__(self, n_particles: int):
        n = n_particles
        self.n_particles = n
        self.size = n // 2 + 1
        k = self.size
        self.m = n / 2 - np.arange(k)
        self.m2 = self.m**2
        # full amplitude = scale * reduced amplitude
        self.scale = np.full(k, 1 / math.sqrt(2))
        a = raising_elements(n)
        diag = np.zeros(k)
        off = 0.5 * a[: k - 1].copy()
        if n % 2 == 0:
            self.scale[-1] = 1.0
            if k > 1:
                off[-1] *= math.sqrt(2)
        else:
            diag[-1] = 0.5 * a[k - 1]
        self.values, self.vectors = eigh_tridiag(diag, off)
        self.initial = self.from_full(make_coherent_x(n).amplitudes)

    @property
    def nbytes(self) -> int:
        return self.vectors.nbytes

    def to_full(self, u: np.ndarray) -> np.ndarray:
        n, k = self.n_particles, self.size
        psi = np.empty(n + 1, dtype=complex)
        psi[:k] = self.scale * u
        psi[n - k + 1 :] = psi[:k][::-1]
        return psi

    def from_full(self, psi: np.ndarray) -> np.ndarray:
        return np.asarray(psi[: self.size], dtype=complex) / self.scale

    def rotate(self, u: np.ndarray, alpha: float) -> np.ndarray:
        if alpha == 0.0:
            return u
        v = self.vectors
        stacked = np.stack([u.real, u.imag], axis=1)
        c = v.T @ stacked
        c = (c[:, 0] + 1j * c[:, 1]) * np.exp(-1j * alpha * self.values)
        out = v @ np.stack([c.real, c.imag], axis=1)
        return out[:, 0] + 1j * out[:, 1]

    def twist(self, u: np.ndarray, duration: float) -> np.ndarray:
        return np.exp(-1j * duration * self.m2) * u

    def report(self, u: np.ndarray) -> SqueezingReport:
        mean, second = moments(self.n_particles, self.to_full(u))
        return squeezing_from_moments(self.n_particles, mean, second)

    def run(self, pulses: PulseSequence) -> np.ndarray:
        u = self.initial
        for p in pulses.pulses:
            u = self.twist(self.rotate(u, p.alpha), p.duration)
        return u

    def final_state(self, pulses: PulseSequence) -> DickeState:
        return DickeState(self.n_particles, self.to_full(self.run(pulses)))

    def xi2(self, pulses: PulseSequence) -> float:
        return self.report(self.run(pulses)).xi2

    def trajectory(self, pulses: PulseSequence, times: Sequence[float]) -> list[SqueezingReport]:
        """Squeezing reports at each requested time (rotations act at segment starts)."""
        times = np.asarray(times, dtype=float)
        total = pulses.total_duration
        if times.size and (times.min() < 0 or times.max() > total + SAMPLE_TOL):
            raise ValueError(f"sample times must lie in [0, {total}]")
        out: list = [None] * times.size
        taken = np.zeros(times.size, dtype=bool)
        u = self.initial
        start = 0.0
        for p in pulses.pulses:
            u = self.rotate(u, p.alpha)
            end = start + p.duration
            hits = np.flatnonzero(
                (~taken) & (times >= start - SAMPLE_TOL) & (times <= end + SAMPLE_TOL)
            )
            for i in hits:
                out[i] = self.report(self.twist(u, max(times[i] - start, 0.0)))
            taken[hits] = True
            u = self.twist(u, p.duration)
            start = end
        for i in np.flatnonzero(~taken):
            # only t = 0 with an empty sequence lands here
            out[i] = self.report(u)
        return out


def engine(n_particles: int) -> ReducedEngine:
    def build():
        eng = ReducedEngine(n_particles)
        return (eng, eng.vectors)

    return _ENGINES.get(n_particles, build)[0]


def clear_engines():
    _ENGINES.clear()
