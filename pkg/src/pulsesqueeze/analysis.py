"""Scaling fits, control-noise Monte Carlo, and entanglement-depth bounds."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .optimize import (
    OptimizationResult,
    OptimizerConfig,
    oat_baseline,
    objective,
    optimize_protocol,
    tat_baseline,
    warm_start,
)
from .propagate import Protocol, protocol_to_pulses
from .reduced import engine
from .spin import SqueezingReport, raising_elements

log = logging.getLogger(__name__)

SCHEMES = ("OAT", "TAT", "OPT2", "OPT3")


@dataclass(frozen=True)
class ScalingPoint:
    N: int
    xi2: float
    scheme: str
    total_duration: float = math.nan
    protocol: Protocol | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.xi2 > 0:
            raise ValueError("xi2 must be positive")
        if self.N < 2:
            raise ValueError("N must be >= 2")


@dataclass(frozen=True)
class PowerLawFit:
    beta: float
    prefactor: float
    residual: float
    n_points: int

    def predict(self, n):
        return self.prefactor * np.asarray(n, dtype=float) ** (-self.beta)


def fit_power_law(points: Sequence[ScalingPoint] | Sequence[tuple[float, float]]) -> PowerLawFit:
    """Least squares of log(xi2) on log(N); beta is minus the slope."""
    pairs = [(p.N, p.xi2) if isinstance(p, ScalingPoint) else tuple(p) for p in points]
    if len(pairs) < 3:
        raise ValueError(f"need at least 3 points, got {len(pairs)}")
    n, xi2 = np.array(pairs, dtype=float).T
    if np.unique(n).size != n.size:
        raise ValueError("particle numbers must be distinct")
    x, y = np.log(n), np.log(xi2)
    design = np.column_stack([np.ones_like(x), x])
    (intercept, slope), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - (intercept + slope * x)
    return PowerLawFit(
        beta=float(-slope),
        prefactor=float(np.exp(intercept)),
        residual=float(np.sqrt(np.mean(resid**2))),
        n_points=len(pairs),
    )


def log_spaced_sizes(n_min: int, n_max: int, per_decade: int = 8) -> list[int]:
    count = max(2, int(round(per_decade * math.log10(n_max / n_min))) + 1)
    return sorted({int(round(v)) for v in np.geomspace(n_min, n_max, count)})


def scaling_study(
    sizes: Sequence[int],
    scheme: str,
    config: OptimizerConfig | None = None,
    seed_result: OptimizationResult | None = None,
    polish_config: OptimizerConfig | None = None,
) -> list[ScalingPoint]:
    """Optimal squeezing versus N for one scheme.

    OAT and TAT optimize the single duration at every N. The OPT schemes run
    a multi-start search at the smallest N (unless ``seed_result`` is given)
    and continue upward, polishing each N from the previous optimum or its
    log-log extrapolation, whichever is better there.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    points = []
    if scheme == "OAT":
        for n in sizes:
            t, xi2 = oat_baseline(n)
            points.append(ScalingPoint(n, xi2, scheme, t, Protocol.oat(t)))
        return points
    if scheme == "TAT":
        for n in sizes:
            t, xi2 = tat_baseline(n)
            points.append(ScalingPoint(n, xi2, scheme, t))
        return points
    if scheme not in ("OPT2", "OPT3"):
        raise ValueError(f"unknown scheme {scheme!r}")

    n_steps = int(scheme[-1])
    config = config or OptimizerConfig(n_steps=n_steps)
    if config.n_steps != n_steps:
        raise ValueError(f"{scheme} needs n_steps={n_steps}, config has {config.n_steps}")
    polish_config = polish_config or config
    current = seed_result
    chain: list[tuple[int, np.ndarray]] = []
    for n in sizes:
        if current is None:
            current = optimize_protocol(n, config)
        else:
            current = warm_start(n, continuation_guess(n, chain, current.protocol), polish_config)
        chain.append((n, current.protocol.to_params()))
        log.info("%s N=%d xi2=%.6g duration=%.4g", scheme, n, current.xi2, current.total_duration)
        points.append(ScalingPoint(n, current.xi2, scheme, current.total_duration, current.protocol))
    return points


def extrapolate_params(n: int, chain: Sequence[tuple[int, np.ndarray]]) -> np.ndarray | None:
    """Secant step in log N / log|p| from the last two optima; None if signs disagree."""
    if len(chain) < 2:
        return None
    (n0, p0), (n1, p1) = chain[-2], chain[-1]
    if np.any(np.sign(p0) != np.sign(p1)) or np.any(p0 == 0):
        return None
    s = math.log(n / n1) / math.log(n1 / n0)
    log_abs = np.log(np.abs(p1)) + s * (np.log(np.abs(p1)) - np.log(np.abs(p0)))
    return np.sign(p1) * np.exp(log_abs)


def continuation_guess(
    n: int, chain: Sequence[tuple[int, np.ndarray]], previous: Protocol
) -> Protocol:
    """Better of the previous optimum and its extrapolation, judged at the new N."""
    guess = extrapolate_params(n, chain)
    if guess is None:
        return previous
    candidate = Protocol.from_params(guess)
    if objective(n, candidate.to_params()) < objective(n, previous.to_params()):
        return candidate
    return previous


# --------------------------------------------------------------------------
# control noise


@dataclass(frozen=True)
class NoiseEnvelope:
    times: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    trials: int
    rel_error: float
    ideal: np.ndarray = field(default=None)
    final_values: np.ndarray = field(default=None)

    @property
    def final_width(self) -> float:
        return float(self.hi[-1] - self.lo[-1])


def perturb_protocol(protocol: Protocol, factors: Sequence[float]) -> Protocol:
    """Scale every free parameter (T_1, theta_2, T_2, ...) by its factor."""
    return Protocol.from_params(protocol.to_params() * np.asarray(factors, dtype=float))


def relative_errors(
    n_params: int, trials: int, seed: int, distribution: str = "uniform"
) -> np.ndarray:
    """Unit-scale error draws; multiply by the error magnitude to use.

    Drawing once and rescaling gives common random numbers across magnitudes.
    """
    rng = np.random.default_rng(seed)
    if distribution == "uniform":
        return rng.uniform(-1.0, 1.0, size=(trials, n_params))
    if distribution == "gaussian":
        draws = rng.standard_normal(size=(trials, n_params))
        bad = np.abs(draws) > 5
        while bad.any():
            draws[bad] = rng.standard_normal(size=int(bad.sum()))
            bad = np.abs(draws) > 5
        return draws
    raise ValueError(f"unknown noise distribution {distribution!r}")


def squeezing_trajectory(n_particles: int, protocol: Protocol, times: Sequence[float]) -> np.ndarray:
    reports = engine(n_particles).trajectory(protocol_to_pulses(protocol), times)
    return np.array([r.xi2 for r in reports])


def noise_monte_carlo(
    n_particles: int,
    protocol: Protocol,
    rel_error: float,
    trials: int = 50,
    seed: int = 7,
    distribution: str = "uniform",
    points: int = 200,
) -> NoiseEnvelope:
    """Envelope of xi2(t) when all control parameters carry relative errors."""
    if rel_error < 0:
        raise ValueError("rel_error must be >= 0")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n_params = 2 * protocol.n_steps - 1
    factors = 1.0 + rel_error * relative_errors(n_params, trials, seed, distribution)
    perturbed = [perturb_protocol(protocol, f) for f in factors]
    horizon = max(p.total_duration for p in perturbed)
    times = np.linspace(0.0, horizon, points)

    def held(p):
        inside = times <= p.total_duration
        sampled = squeezing_trajectory(n_particles, p, np.append(times[inside], p.total_duration))
        values = np.full(points, sampled[-1])
        values[inside] = sampled[:-1]
        return values

    data = np.array([held(p) for p in perturbed])
    ideal = held(protocol)
    lo, hi = data.min(axis=0), data.max(axis=0)
    return NoiseEnvelope(
        times=times,
        # clipping removes summation rounding so identical trials give lo == mean == hi
        mean=np.clip(data.mean(axis=0), lo, hi),
        lo=lo,
        hi=hi,
        trials=trials,
        rel_error=rel_error,
        ideal=ideal,
        final_values=data[:, -1],
    )


# --------------------------------------------------------------------------
# entanglement depth


@dataclass(frozen=True)
class DepthCurve:
    """Minimal <j_z^2> versus contrast <j_x>/j for a block of n spin-1/2 particles."""

    block_size: int
    x: np.ndarray
    f: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.x.tolist(), self.f.tolist()))

    def __call__(self, contrast):
        return np.interp(contrast, self.x, self.f)


def _ground_state_point(j2: int, mu: float, m: np.ndarray, off: np.ndarray) -> tuple[float, float]:
    _, vec = eigh_tridiagonal(m * m, -mu * off, select="i", select_range=(0, 0))
    v = vec[:, 0]
    jx = 2.0 * np.dot(v[:-1] * off, v[1:])
    fz = float(np.dot(v * v, m * m))
    return jx / (j2 / 2), fz


def default_mu_grid(n: int = 1, points: int = 400) -> np.ndarray:
    # the ground state approaches the coherent point only once mu >> j
    return np.geomspace(1e-3, 1e3 * max(1, n), points)


def optimal_squeezing_curve(
    n: int,
    contrast_grid: Sequence[float] | None = None,
    mu_grid: Sequence[float] | None = None,
    refine_passes: int = 3,
    refine_gap: float = 0.01,
) -> DepthCurve:
    """Lower boundary of (contrast, <j_z^2>) for spin j = n/2.

    Points come from ground states of j_z^2 - mu j_x; extra mu values are
    inserted where neighbouring contrasts differ by more than ``refine_gap``.
    """
    if n < 1:
        raise ValueError("block size must be >= 1")
    if n == 1:
        grid = np.linspace(0.0, 1.0, 2) if contrast_grid is None else np.asarray(contrast_grid, float)
        return DepthCurve(1, grid, np.full(grid.size, 0.25))

    m = n / 2 - np.arange(n + 1)
    off = 0.5 * raising_elements(n)
    mus = np.asarray(default_mu_grid(n) if mu_grid is None else mu_grid, dtype=float)
    samples = {float(mu): _ground_state_point(n, mu, m, off) for mu in mus}
    for _ in range(refine_passes):
        keys = sorted(samples)
        added = False
        for a, b in zip(keys[:-1], keys[1:]):
            if abs(samples[b][0] - samples[a][0]) > refine_gap:
                mid = math.sqrt(a * b)
                samples[mid] = _ground_state_point(n, mid, m, off)
                added = True
        if not added:
            break

    pts = np.array(sorted(samples.values()))
    floor = 0.0 if n % 2 == 0 else 0.25
    x = np.concatenate([[0.0], pts[:, 0], [1.0]])
    f = np.concatenate([[floor], pts[:, 1], [n / 4]])
    order = np.argsort(x, kind="stable")
    x, f = x[order], f[order]
    # clean rounding noise: f(x) must not decrease with x
    f = np.minimum.accumulate(f[::-1])[::-1]
    x, idx = np.unique(x, return_index=True)
    f = f[idx]
    if contrast_grid is not None:
        grid = np.asarray(contrast_grid, float)
        return DepthCurve(n, grid, np.interp(grid, x, f))
    return DepthCurve(n, x, f)


def depth_curves(block_sizes: Iterable[int], **kwargs) -> list[DepthCurve]:
    return [optimal_squeezing_curve(n, **kwargs) for n in block_sizes]


def block_bound(n_particles: int, curve: DepthCurve, contrast: float) -> float:
    """Smallest transverse variance reachable with blocks of ``curve.block_size`` particles."""
    return n_particles / curve.block_size * float(curve(contrast))


def certify_depth(
    n_particles: int,
    report: SqueezingReport,
    curves: Sequence[DepthCurve],
    rtol: float = 1e-9,
) -> int:
    """Largest block size n whose optimal-squeezing bound the state violates.

    Under the strict reading, violating the n-block bound means at least n+1
    particles are entangled; the returned n is the block size itself. With
    no violation the result is 1.
    """
    contrast = 2.0 * report.mean_spin_len / n_particles
    best = 1
    for curve in sorted(curves, key=lambda c: c.block_size):
        if report.v_min < block_bound(n_particles, curve, contrast) * (1 - rtol):
            best = max(best, curve.block_size)
    return best
