"""Search for few-pulse twisting protocols that minimize the squeezing parameter."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .propagate import Protocol, canonical_theta, evolve_tat, protocol_to_pulses
from .reduced import engine
from .spin import DegenerateSignalError, make_polarized_z, squeezing_parameter

log = logging.getLogger(__name__)

BOUND_PENALTY = 1e3
DEGENERATE_VALUE = 1e6
DEFAULT_STARTS = {1: 8, 2: 64, 3: 256}


@dataclass(frozen=True)
class OptimizerConfig:
    n_steps: int = 2
    starts: int | None = None
    seed: int = 20130605
    t_max: float = 1.0
    t_sample_min: float = 1e-4
    x_tol: float = 1e-8
    f_tol: float = 1e-10
    max_evals: int = 20000
    restarts: int = 1

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.starts is None:
            object.__setattr__(self, "starts", DEFAULT_STARTS.get(self.n_steps, 256))
        if self.starts < 1:
            raise ValueError("starts must be >= 1")
        if not self.t_max > 0:
            raise ValueError("t_max must be > 0")
        if not (self.x_tol > 0 and self.f_tol > 0):
            raise ValueError("tolerances must be > 0")
        if not 0 < self.t_sample_min < self.t_max:
            raise ValueError("need 0 < t_sample_min < t_max")

    @property
    def n_params(self) -> int:
        return 2 * self.n_steps - 1


@dataclass(frozen=True)
class PenaltyConfig:
    lam: float = 0.0
    lambda_grid: tuple[float, ...] = tuple(np.logspace(-2, 3, 24))

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        grid = tuple(float(v) for v in self.lambda_grid)
        if any(v < 0 for v in grid):
            raise ValueError("lambda grid must be nonnegative")
        object.__setattr__(self, "lambda_grid", grid)


@dataclass(frozen=True)
class OptimizationResult:
    n_particles: int
    protocol: Protocol
    xi2: float
    total_duration: float
    seed: int
    starts_used: int
    evals_used: int
    history: tuple[float, ...] = ()
    penalty_lambda: float = 0.0
    objective_value: float | None = None


@dataclass
class LocalResult:
    x: np.ndarray
    fun: float
    evals: int
    converged: bool
    f_start: float = math.nan


# --------------------------------------------------------------------------
# objective


def _fold_duration(t: float, t_max: float) -> tuple[float, float]:
    """Reflect a duration into [0, t_max]; return (folded, squared violation)."""
    violation = 0.0
    if t < 0:
        violation = t * t
        t = -t
    if t > t_max:
        violation += (t - t_max) ** 2
        t = max(2 * t_max - t, 0.0)
    return t, violation


def decode(params: Sequence[float], t_max: float = 1.0) -> tuple[Protocol, float]:
    """Flat parameters -> (in-bounds protocol, bound penalty)."""
    params = np.asarray(params, dtype=float)
    folded = params.copy()
    penalty = 0.0
    for i in range(0, params.size, 2):
        folded[i], v = _fold_duration(params[i], t_max)
        penalty += v
    for i in range(1, params.size, 2):
        folded[i] = canonical_theta(params[i])
    return Protocol.from_params(folded), BOUND_PENALTY * penalty


def protocol_xi2(n_particles: int, protocol: Protocol) -> float:
    """Squeezing parameter of a protocol via the parity-reduced lab frame."""
    try:
        return engine(n_particles).xi2(protocol_to_pulses(protocol))
    except DegenerateSignalError:
        return DEGENERATE_VALUE


def objective(
    n_particles: int,
    params: Sequence[float],
    penalty: PenaltyConfig | None = None,
    t_max: float = 1.0,
) -> float:
    protocol, bound_penalty = decode(params, t_max)
    value = protocol_xi2(n_particles, protocol) + bound_penalty
    if penalty is not None and penalty.lam:
        value += penalty.lam * protocol.total_duration
    return value


# --------------------------------------------------------------------------
# local search


def _nelder_mead(f, x0, steps, x_tol, f_tol, max_evals):
    n = x0.size
    simplex = np.vstack([x0] + [x0 + steps[i] * np.eye(n)[i] for i in range(n)])
    values = np.array([f(x) for x in simplex])
    evals = n + 1
    converged = False
    while evals < max_evals:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        size = np.max(np.abs(simplex[1:] - simplex[0]))
        spread = values[-1] - values[0]
        if size < x_tol or spread < f_tol:
            converged = True
            break
        centroid = simplex[:-1].mean(axis=0)
        xr = centroid + (centroid - simplex[-1])
        fr = f(xr)
        evals += 1
        if fr < values[0]:
            xe = centroid + 2.0 * (centroid - simplex[-1])
            fe = f(xe)
            evals += 1
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = centroid + 0.5 * (xr - centroid)
        else:
            xc = centroid + 0.5 * (simplex[-1] - centroid)
        fc = f(xc)
        evals += 1
        if fc < min(fr, values[-1]):
            simplex[-1], values[-1] = xc, fc
            continue
        for i in range(1, n + 1):
            simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
            values[i] = f(simplex[i])
        evals += n
    best = int(np.argmin(values))
    return simplex[best].copy(), float(values[best]), evals, converged


def default_steps(x0: np.ndarray) -> np.ndarray:
    """Initial simplex edges: 10% of each duration, 0.1 rad for each angle."""
    steps = np.empty_like(x0)
    steps[0::2] = np.maximum(0.1 * np.abs(x0[0::2]), 1e-6)
    steps[1::2] = 0.1
    return steps


def local_minimize(
    f: Callable[[np.ndarray], float],
    x0: Sequence[float],
    config: OptimizerConfig,
    steps: Sequence[float] | None = None,
) -> LocalResult:
    """Nelder-Mead simplex descent with ``config.restarts`` restarts from the best point.

    Stops on simplex size < x_tol, value spread < f_tol, or the evaluation
    budget; budget exhaustion shows up as ``converged=False``.
    """
    x0 = np.asarray(x0, dtype=float)
    f_start = float(f(x0))
    best_x, best_f, evals = x0, f_start, 1
    converged = False
    for _ in range(1 + config.restarts):
        base_steps = default_steps(best_x) if steps is None else np.asarray(steps, float)
        budget = config.max_evals - evals
        if budget <= x0.size + 1:
            break
        x, fx, used, converged = _nelder_mead(
            f, best_x, base_steps, config.x_tol, config.f_tol, budget
        )
        evals += used
        if fx <= best_f:
            best_x, best_f = x, fx
    if not converged:
        log.info("local search stopped on evaluation budget (%d evals)", evals)
    return LocalResult(best_x, best_f, evals, converged, f_start)


# --------------------------------------------------------------------------
# protocol search


def sample_start(config: OptimizerConfig, rng: np.random.Generator) -> np.ndarray:
    x = np.empty(config.n_params)
    lo, hi = math.log(config.t_sample_min), math.log(config.t_max)
    x[0::2] = np.exp(rng.uniform(lo, hi, size=config.n_steps))
    x[1::2] = rng.uniform(-math.pi / 2, math.pi / 2, size=config.n_steps - 1)
    return x


def _finish(
    n_particles: int,
    x: np.ndarray,
    config: OptimizerConfig,
    penalty: PenaltyConfig | None,
    value: float,
    starts_used: int,
    evals: int,
    history: Sequence[float],
) -> OptimizationResult:
    protocol, _ = decode(x, config.t_max)
    return OptimizationResult(
        n_particles=n_particles,
        protocol=protocol,
        xi2=protocol_xi2(n_particles, protocol),
        total_duration=protocol.total_duration,
        seed=config.seed,
        starts_used=starts_used,
        evals_used=evals,
        history=tuple(history),
        penalty_lambda=penalty.lam if penalty is not None else 0.0,
        objective_value=value,
    )


def optimize_protocol(
    n_particles: int,
    config: OptimizerConfig,
    penalty: PenaltyConfig | None = None,
) -> OptimizationResult:
    """Multi-start Nelder-Mead over the 2n-1 protocol parameters.

    Start i is drawn from ``default_rng([seed, i])`` so results do not depend
    on evaluation order. Ties are broken by shorter duration, then lower index.
    """

    def f(x):
        return objective(n_particles, x, penalty, config.t_max)

    best_key, best_x = None, None
    history, evals = [], 0
    for i in range(config.starts):
        rng = np.random.default_rng([config.seed, i])
        res = local_minimize(f, sample_start(config, rng), config)
        evals += res.evals
        protocol, _ = decode(res.x, config.t_max)
        key = (res.fun, protocol.total_duration, i)
        if best_key is None or key < best_key:
            best_key, best_x = key, res.x
        history.append(best_key[0])
    return _finish(n_particles, best_x, config, penalty, best_key[0], config.starts, evals, history)


def warm_start(
    n_target: int,
    prior: OptimizationResult | Protocol,
    config: OptimizerConfig,
    penalty: PenaltyConfig | None = None,
) -> OptimizationResult:
    """Polish a known protocol (typically from a smaller N) at ``n_target``."""
    protocol = prior.protocol if isinstance(prior, OptimizationResult) else prior
    x0 = protocol.to_params()

    def f(x):
        return objective(n_target, x, penalty, config.t_max)

    res = local_minimize(f, x0, config)
    return _finish(n_target, res.x, config, penalty, res.fun, 1, res.evals, [res.fun])


def extend_steps(result: OptimizationResult, n_steps: int) -> Protocol:
    """Embed a protocol into more steps by appending zero-duration segments."""
    segs = list(result.protocol.segments)
    params = list(Protocol(tuple(segs)).to_params())
    while len(params) < 2 * n_steps - 1:
        params += [0.0, 0.0]
    return Protocol.from_params(params)


# --------------------------------------------------------------------------
# one-parameter baselines


def _scan_refine(
    xi2_of_t: Callable[[float], float], t_lo: float, t_hi: float, points: int
) -> tuple[float, float]:
    grid = np.geomspace(t_lo, t_hi, points)
    values = np.array([xi2_of_t(t) for t in grid])
    i = int(np.argmin(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, points - 1)]
    # golden-section inside the bracketing grid cell
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = xi2_of_t(c), xi2_of_t(d)
    while b - a > 1e-13 * max(1.0, b):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = xi2_of_t(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = xi2_of_t(d)
    t_best = 0.5 * (a + b)
    candidates = [(xi2_of_t(t_best), t_best), (values[i], grid[i])]
    f_best, t_best = min(candidates)
    return float(t_best), float(f_best)


def oat_xi2(n_particles: int, duration: float) -> float:
    return protocol_xi2(n_particles, Protocol.oat(duration))


def oat_baseline(
    n_particles: int, t_max: float = 1.0, t_min: float = 1e-5, points: int = 2000
) -> tuple[float, float]:
    """(T_opt, xi2_opt) of plain one-axis twisting from the +x coherent state."""
    if n_particles < 2:
        raise ValueError("one-axis twisting needs N >= 2")
    eng = engine(n_particles)
    u0 = eng.initial

    def xi2(t):
        try:
            return eng.report(eng.twist(u0, t)).xi2
        except DegenerateSignalError:
            return DEGENERATE_VALUE

    return _scan_refine(xi2, t_min, t_max, points)


def tat_xi2(n_particles: int, duration: float) -> float:
    state = evolve_tat(make_polarized_z(n_particles), duration)
    try:
        return squeezing_parameter(state).xi2
    except DegenerateSignalError:
        return DEGENERATE_VALUE


def tat_baseline(
    n_particles: int, t_max: float | None = None, t_min: float = 1e-5, points: int = 400
) -> tuple[float, float]:
    """(T_opt, xi2_opt) of two-axis twisting from the +z polarized state.

    The default scan stops at 4 ln(2N)/N, comfortably past the first
    squeezing minimum (near ln(2N)/(2N)); later revivals are not sought.
    """
    if n_particles < 2:
        raise ValueError("two-axis twisting needs N >= 2")
    if t_max is None:
        t_max = min(1.0, 4 * math.log(2 * n_particles) / n_particles)
    return _scan_refine(lambda t: tat_xi2(n_particles, t), t_min, t_max, points)


# --------------------------------------------------------------------------
# duration trade-off


def pareto_filter(points: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Keep (duration, xi2) points not dominated by a shorter-or-equal, better one."""
    front: list[tuple[float, float]] = []
    for d, x in sorted(points):
        if not front or x < front[-1][1]:
            front.append((d, x))
    return front


@dataclass(frozen=True)
class ParetoPoint:
    lam: float
    total_duration: float
    xi2: float
    protocol: Protocol


def pareto_sweep(
    n_particles: int,
    config: OptimizerConfig,
    penalty: PenaltyConfig,
    start: OptimizationResult | None = None,
) -> list[ParetoPoint]:
    """Trace the duration/squeezing trade-off by ascending the penalty weight.

    The sweep begins at the unconstrained optimum (lambda = 0, computed by
    multi-start unless ``start`` is given) and warm-starts each lambda from
    the previous solution. Reported values are unpenalized.
    """
    grid = list(penalty.lambda_grid)
    if not grid:
        raise ValueError("lambda grid is empty")
    if grid != sorted(grid):
        raise ValueError("lambda grid must be ascending")
    if start is None:
        start = optimize_protocol(n_particles, config)
    points = [ParetoPoint(0.0, start.total_duration, start.xi2, start.protocol)]
    current = start
    for lam in grid:
        if lam == 0.0:
            continue
        current = warm_start(n_particles, current, config, replace(penalty, lam=lam))
        points.append(ParetoPoint(lam, current.total_duration, current.xi2, current.protocol))
    return points
