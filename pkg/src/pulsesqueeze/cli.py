"""Command-line entry point: every command writes CSV/JSON data plus a run manifest."""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis, io
from .optimize import (
    OptimizationResult,
    OptimizerConfig,
    PenaltyConfig,
    local_minimize,
    oat_baseline,
    objective,
    optimize_protocol,
    pareto_filter,
    pareto_sweep,
    tat_baseline,
    tat_xi2,
)
from .propagate import Protocol, protocol_to_pulses
from .reduced import engine
from .spin import squeezing_parameter

log = logging.getLogger("pulsesqueeze")

DEFAULT_SEED = OptimizerConfig().seed
DEFAULT_LAMBDAS = ",".join(f"{v:.6g}" for v in PenaltyConfig().lambda_grid)


class InvariantViolation(RuntimeError):
    """A computed result broke a property the model guarantees."""


def check(condition: bool, message: str):
    if not condition:
        raise InvariantViolation(message)


# --------------------------------------------------------------------------
# flag parsing


def float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("list is empty")
    return values


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n-particles", type=positive_int, default=2000)
    common.add_argument("--steps", type=positive_int, default=3)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--starts", type=positive_int, default=None, help="multi-start count (default by step count)")
    common.add_argument("--out-dir", type=Path, default=Path("out"))
    common.add_argument("--lambda-grid", type=float_list, default=float_list(DEFAULT_LAMBDAS))
    common.add_argument("--rel-error", type=float_list, default=[0.0, 0.001, 0.01, 0.05])
    common.add_argument("--trials", type=positive_int, default=50)
    common.add_argument("--protocol", type=Path, default=None, help="protocol JSON to use instead of optimizing")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="pulsesqueeze", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", parents=[common], help="find the best n-step protocol")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("landscape", parents=[common], help="xi2 over (theta2, T2) at fixed T1")
    p.add_argument("--t1", type=float, default=None, help="first twist duration (default 0.9 x OAT optimum)")
    p.add_argument("--theta-points", type=positive_int, default=61)
    p.add_argument("--t2-points", type=positive_int, default=60)
    p.add_argument("--t2-max", type=float, default=0.3)
    p.set_defaults(func=cmd_landscape, steps=2)

    p = sub.add_parser("scaling", parents=[common], help="optimal xi2 versus N")
    p.add_argument("--scheme", choices=analysis.SCHEMES, action="append", required=True)
    p.add_argument("--n-min", type=positive_int, default=100)
    p.add_argument("--n-max", type=positive_int, default=10_000)
    p.add_argument("--per-decade", type=positive_int, default=8)
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("trajectory", parents=[common], help="xi2(t) along optimal protocols")
    p.add_argument("--scheme", choices=analysis.SCHEMES, action="append", required=True)
    p.add_argument("--points", type=positive_int, default=400)
    p.add_argument("--t-end", type=float, default=None, help="time horizon (default 1.5 x longest protocol)")
    p.set_defaults(func=cmd_trajectory)

    p = sub.add_parser("pareto", parents=[common], help="duration versus squeezing front")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("noise", parents=[common], help="Monte Carlo envelopes under control errors")
    p.add_argument("--distribution", choices=("uniform", "gaussian"), default="uniform")
    p.add_argument("--points", type=positive_int, default=200)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("depth", parents=[common], help="entanglement-depth bounds and certified depths")
    p.add_argument("--blocks", type=float_list, default=None, help="block sizes (default 1..N)")
    p.add_argument("--curve-points", type=positive_int, default=201)
    p.set_defaults(func=cmd_depth, n_particles=200)
    return parser


def optimizer_config(args, n_steps: int | None = None) -> OptimizerConfig:
    return OptimizerConfig(n_steps=n_steps or args.steps, starts=args.starts, seed=args.seed)


def load_or_optimize(args, manifest: io.RunManifest, n_steps: int | None = None) -> OptimizationResult:
    if args.protocol is not None:
        n, protocol, xi2, seed = io.read_protocol(args.protocol)
        if n != args.n_particles:
            raise ValueError(f"protocol file is for N={n}, --n-particles is {args.n_particles}")
        value = engine(n).xi2(protocol_to_pulses(protocol))
        check(math.isclose(value, xi2, rel_tol=1e-6), f"stored xi2 {xi2} does not reproduce ({value})")
        return OptimizationResult(n, protocol, value, protocol.total_duration, seed, 0, 0)
    cfg = optimizer_config(args, n_steps)
    result = optimize_protocol(args.n_particles, cfg)
    manifest.results.setdefault("optimized", {})[f"OPT{cfg.n_steps}"] = {
        "xi2": result.xi2,
        "total_duration": result.total_duration,
        "starts": result.starts_used,
        "evals": result.evals_used,
    }
    return result


def check_xi2(value: float, what: str):
    check(math.isfinite(value) and value > 0, f"{what}: xi2 must be finite and positive, got {value}")


# --------------------------------------------------------------------------
# commands


def cmd_optimize(args, manifest: io.RunManifest):
    result = load_or_optimize(args, manifest)
    check_xi2(result.xi2, "optimize")
    doc = io.protocol_to_dict(args.n_particles, result.protocol, result.xi2, result.seed)
    io.write_json(manifest.output_path(args.out_dir, "protocol.json"), doc)
    manifest.results["xi2"] = result.xi2
    manifest.results["total_duration"] = result.total_duration


def cmd_landscape(args, manifest: io.RunManifest):
    n = args.n_particles
    t_oat, xi2_oat = oat_baseline(n)
    t1 = 0.9 * t_oat if args.t1 is None else args.t1
    if not t1 >= 0:
        raise ValueError("--t1 must be >= 0")
    if not args.t2_max > 0:
        raise ValueError("--t2-max must be > 0")
    # theta = pi/2 is the same axis as -pi/2, so the grid is half-open
    thetas = np.linspace(-math.pi / 2, math.pi / 2, args.theta_points, endpoint=False)
    if not np.any(thetas == 0.0):
        thetas = np.sort(np.append(thetas, 0.0))
    t2s = np.concatenate([[0.0], np.geomspace(1e-4, args.t2_max, args.t2_points - 1)])
    grid = np.array([[objective(n, [t1, th, t2]) for t2 in t2s] for th in thetas])
    check(np.all(np.isfinite(grid)) and np.all(grid > 0), "landscape contains invalid xi2")

    i, j = np.unravel_index(np.argmin(grid), grid.shape)
    axis_row = grid[np.flatnonzero(thetas == 0.0)[0]]
    rows = [
        (th, t2, -math.log10(v), v)
        for th, line in zip(thetas, grid)
        for t2, v in zip(t2s, line)
    ]
    io.write_csv(manifest.output_path(args.out_dir, "grid.csv"), ["theta2", "T2", "neg_log10_xi2", "xi2"], rows)
    io.write_csv(
        manifest.output_path(args.out_dir, "axis.csv"),
        ["T_total", "xi2"],
        [(t1 + t2, v) for t2, v in zip(t2s, axis_row)],
    )

    # polish the grid minimum on the same slice (T1 fixed)
    cfg = optimizer_config(args, 2)
    polished = local_minimize(lambda x: objective(n, [t1, x[0], x[1]]), [thetas[i], t2s[j]], cfg)
    check(polished.fun <= grid[i, j] + cfg.f_tol, "refined optimum is worse than the grid minimum")
    manifest.results.update(
        t1=t1,
        t_oat=t_oat,
        xi2_oat=xi2_oat,
        grid_min={"theta2": thetas[i], "T2": t2s[j], "xi2": grid[i, j]},
        axis_min=float(axis_row.min()),
        refined_min={"theta2": polished.x[0], "T2": polished.x[1], "xi2": polished.fun},
    )


def scheme_points(args, scheme: str, sizes: list[int]) -> list[analysis.ScalingPoint]:
    if scheme in ("OAT", "TAT"):
        return analysis.scaling_study(sizes, scheme)
    cfg = optimizer_config(args, int(scheme[-1]))
    seed = None
    if args.protocol is not None:
        n, protocol, _, _ = io.read_protocol(args.protocol)
        if protocol.n_steps != cfg.n_steps:
            raise ValueError(f"protocol has {protocol.n_steps} steps, {scheme} needs {cfg.n_steps}")
        seed = OptimizationResult(n, protocol, math.nan, protocol.total_duration, args.seed, 0, 0)
    return analysis.scaling_study(sizes, scheme, cfg, seed_result=seed)


def cmd_scaling(args, manifest: io.RunManifest):
    if args.n_min >= args.n_max or args.n_min < 2:
        raise ValueError("need 2 <= --n-min < --n-max")
    sizes = analysis.log_spaced_sizes(args.n_min, args.n_max, args.per_decade)
    fits = {}
    for scheme in dict.fromkeys(args.scheme):
        points = scheme_points(args, scheme, sizes)
        for p in points:
            check_xi2(p.xi2, f"{scheme} N={p.N}")
        io.write_csv(
            manifest.output_path(args.out_dir, f"{scheme}.csv"),
            ["N", "xi2", "total_duration"],
            [(p.N, p.xi2, p.total_duration) for p in points],
        )
        if len(points) >= 3:
            fit = analysis.fit_power_law(points)
            fits[scheme] = {"beta": fit.beta, "prefactor": fit.prefactor, "residual": fit.residual}
            log.info("%s beta=%.4f", scheme, fit.beta)
    manifest.results["fits"] = fits
    manifest.results["sizes"] = sizes


def cmd_trajectory(args, manifest: io.RunManifest):
    n = args.n_particles
    curves, horizons = {}, {}
    for scheme in dict.fromkeys(args.scheme):
        if scheme == "OAT":
            t, _ = oat_baseline(n)
            curves[scheme] = ("oat", Protocol.oat(t))
            horizons[scheme] = t
        elif scheme == "TAT":
            t, _ = tat_baseline(n)
            curves[scheme] = ("tat", None)
            horizons[scheme] = t
        else:
            result = load_or_optimize(args, manifest, int(scheme[-1]))
            curves[scheme] = ("opt", result.protocol)
            horizons[scheme] = result.total_duration
    t_end = args.t_end if args.t_end is not None else 1.5 * max(horizons.values())
    if not t_end > 0:
        raise ValueError("--t-end must be > 0")
    times = np.linspace(0.0, t_end, args.points)

    for scheme, (kind, protocol) in curves.items():
        if kind == "tat":
            values = np.array([tat_xi2(n, t) for t in times])
        elif kind == "oat":
            eng = engine(n)
            values = np.array([eng.report(eng.twist(eng.initial, t)).xi2 for t in times])
        else:
            # hold the final value once the protocol has ended
            inside = times <= protocol.total_duration
            sampled = analysis.squeezing_trajectory(n, protocol, np.append(times[inside], protocol.total_duration))
            values = np.full(times.size, sampled[-1])
            values[inside] = sampled[:-1]
        check(abs(values[0] - 1.0) < 1e-9, f"{scheme}: xi2(0) must be 1")
        io.write_csv(manifest.output_path(args.out_dir, f"{scheme}.csv"), ["time", "xi2"], zip(times, values))
        manifest.results[scheme] = {"min_xi2": float(values.min()), "argmin_time": float(times[np.argmin(values)])}
    manifest.results["t_end"] = t_end


def cmd_pareto(args, manifest: io.RunManifest):
    n = args.n_particles
    cfg = optimizer_config(args)
    start = load_or_optimize(args, manifest)
    points = pareto_sweep(n, cfg, PenaltyConfig(lambda_grid=tuple(args.lambda_grid)), start=start)
    for p in points:
        check_xi2(p.xi2, f"pareto lambda={p.lam}")
    io.write_csv(
        manifest.output_path(args.out_dir, "sweep.csv"),
        ["lambda", "total_duration", "xi2"],
        [(p.lam, p.total_duration, p.xi2) for p in points],
    )
    front = pareto_filter([(p.total_duration, p.xi2) for p in points])
    check(all(b[1] < a[1] for a, b in zip(front, front[1:])), "front is not decreasing")
    io.write_csv(manifest.output_path(args.out_dir, "front.csv"), ["total_duration", "xi2"], front)
    t_oat, xi2_oat = oat_baseline(n)
    manifest.results.update(front_points=len(front), t_oat=t_oat, xi2_oat=xi2_oat, unconstrained_xi2=start.xi2)


def cmd_noise(args, manifest: io.RunManifest):
    if any(e < 0 for e in args.rel_error):
        raise ValueError("--rel-error values must be >= 0")
    result = load_or_optimize(args, manifest)
    widths = {}
    for eps in args.rel_error:
        env = analysis.noise_monte_carlo(
            args.n_particles, result.protocol, eps, args.trials, args.seed, args.distribution, args.points
        )
        check(np.all(env.lo <= env.mean) and np.all(env.mean <= env.hi), f"envelope ordering broken at eps={eps}")
        if eps == 0:
            check(np.array_equal(env.lo, env.hi) and np.array_equal(env.mean, env.ideal), "eps=0 is not exact")
        io.write_csv(
            manifest.output_path(args.out_dir, f"eps{eps:g}.csv"),
            ["time", "xi2_mean", "xi2_lo", "xi2_hi", "xi2_ideal"],
            zip(env.times, env.mean, env.lo, env.hi, env.ideal),
        )
        widths[f"{eps:g}"] = env.final_width
    manifest.results.update(final_widths=widths, ideal_xi2=result.xi2)
    io.write_json(
        manifest.output_path(args.out_dir, "protocol.json"),
        io.protocol_to_dict(args.n_particles, result.protocol, result.xi2, result.seed),
    )


def cmd_depth(args, manifest: io.RunManifest):
    n = args.n_particles
    blocks = sorted({int(b) for b in (args.blocks or range(1, n + 1))})
    if blocks[0] < 1 or blocks[-1] > n:
        raise ValueError(f"block sizes must lie in [1, {n}]")
    curves = analysis.depth_curves(blocks)
    grid = np.linspace(0.0, 1.0, args.curve_points)
    # per-block normalization: f / (n/4) so every curve ends at 1
    io.write_csv(
        manifest.output_path(args.out_dir, "curves.csv"),
        ["contrast"] + [f"n{c.block_size}" for c in curves],
        [(x, *(float(c(x)) / (c.block_size / 4) for c in curves)) for x in grid],
    )

    states = {}
    t_oat, _ = oat_baseline(n)
    states["OAT"] = Protocol.oat(t_oat)
    states[f"OPT{args.steps}"] = load_or_optimize(args, manifest).protocol
    rows, certified = [], {}
    for name, protocol in states.items():
        report = squeezing_parameter(engine(n).final_state(protocol_to_pulses(protocol)))
        contrast = 2 * report.mean_spin_len / n
        depth = analysis.certify_depth(n, report, curves)
        certified[name] = depth
        rows.append((name, contrast, report.v_min / (n / 4), report.xi2, depth))
    io.write_csv(
        manifest.output_path(args.out_dir, "states.csv"),
        ["state", "contrast", "v_min_normalized", "xi2", "certified_block"],
        rows,
    )
    manifest.results.update(
        certified_block=certified,
        axes="x: contrast 2<S_x>/N; y: minimal transverse variance divided by N/4",
        depth_reading="certified_block n means the n-block bound is violated; strictly that is depth >= n+1",
    )


# --------------------------------------------------------------------------


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    params = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    manifest = io.RunManifest(command=args.command, params=params, seed=args.seed)
    manifest.started_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    try:
        args.func(args, manifest)
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    manifest.wall_time_s = time.perf_counter() - t0
    path = manifest.write(args.out_dir)
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
