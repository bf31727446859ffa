import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pulsesqueeze.optimize import (
    OptimizerConfig,
    PenaltyConfig,
    decode,
    extend_steps,
    local_minimize,
    oat_baseline,
    oat_xi2,
    objective,
    optimize_protocol,
    pareto_filter,
    pareto_sweep,
    tat_baseline,
    tat_xi2,
    warm_start,
)
from pulsesqueeze.propagate import Protocol, run_protocol
from pulsesqueeze.spin import operator_matrices, squeezing_parameter

from conftest import dense_expm


def kitagawa_ueda_xi2(n, t):
    """Closed-form OAT squeezing (Wineland convention) for H = S_z^2, time t."""
    s = n / 2
    mu = 2 * t
    a = 1 - np.cos(mu) ** (2 * s - 2)
    b = 4 * np.sin(mu / 2) * np.cos(mu / 2) ** (2 * s - 2)
    v_min = (s / 2) * (1 + 0.25 * (2 * s - 1) * (a - np.sqrt(a * a + b * b)))
    sx = s * np.cos(mu / 2) ** (2 * s - 1)
    with np.errstate(divide="ignore", over="ignore"):
        return n * v_min / sx**2


# ---------------------------------------------------------------- objective


def test_objective_identity_protocol():
    assert objective(30, [0.0]) == pytest.approx(1.0, abs=1e-12)


def test_objective_zero_angle_merges_segments():
    assert objective(80, [0.01, 0.0, 0.02]) == pytest.approx(objective(80, [0.03]), abs=1e-12)


@pytest.mark.parametrize("n,t", [(10, 0.1), (100, 0.02), (2000, 0.0073), (5000, 0.003)])
def test_oat_matches_closed_form(n, t):
    assert oat_xi2(n, t) == pytest.approx(kitagawa_ueda_xi2(n, t), rel=1e-9)


@settings(max_examples=15, deadline=None)
@given(
    n=st.integers(2, 80),
    params=st.tuples(st.floats(0, 0.1), st.floats(-1.5, 1.5), st.floats(0, 0.2)),
)
def test_objective_equals_effective_frame(n, params):
    state, _ = run_protocol(n, Protocol.from_params(params))
    try:
        expected = squeezing_parameter(state).xi2
    except ValueError:
        return
    if expected > 1e3:
        return
    assert objective(n, params) == pytest.approx(expected, rel=1e-8)


def test_out_of_bounds_penalized_and_finite():
    inside = objective(50, [0.02, 0.3, 0.05])
    outside = objective(50, [-0.02, 0.3, 0.05])
    assert math.isfinite(outside)
    assert outside == pytest.approx(inside + 1e3 * 0.02**2, rel=1e-12)
    p, pen = decode([1.5, 0.1, 0.2], t_max=1.0)
    assert p.durations[0] == pytest.approx(0.5)
    assert pen == pytest.approx(1e3 * 0.25)


def test_penalty_adds_duration_cost():
    base = objective(40, [0.02, 0.2, 0.04])
    pen = objective(40, [0.02, 0.2, 0.04], PenaltyConfig(lam=2.0))
    assert pen == pytest.approx(base + 2.0 * 0.06)


def test_landscape_minimum_off_axis_small_n():
    # at fixed T1 just below the OAT optimum, tilting the second axis helps
    n = 200
    t_oat, _ = oat_baseline(n)
    t1 = 0.7 * t_oat
    thetas = np.linspace(-math.pi / 2, math.pi / 2, 61)
    t2s = np.geomspace(1e-3, 0.3, 40)
    grid = np.array([[objective(n, [t1, th, t2]) for t2 in t2s] for th in thetas])
    i, j = np.unravel_index(np.argmin(grid), grid.shape)
    on_axis = grid[np.argmin(np.abs(thetas))].min()
    assert abs(thetas[i]) > 1e-3
    assert grid[i, j] < on_axis


# ---------------------------------------------------------------- local search


def test_local_minimize_quadratic_bowl(rng):
    a = rng.uniform(-1, 1, size=4)
    cfg = OptimizerConfig(n_steps=1, f_tol=1e-16, x_tol=1e-10)
    res = local_minimize(lambda x: float(np.sum((x - a) ** 2)), rng.uniform(-1, 1, size=4), cfg, steps=[0.1] * 4)
    np.testing.assert_allclose(res.x, a, atol=1e-6)
    assert res.converged


def test_local_minimize_oat_against_grid_scan():
    n = 100
    grid = np.linspace(0.001, 0.2, 1_000_001)
    t_grid = grid[np.argmin(kitagawa_ueda_xi2(n, grid))]
    cfg = OptimizerConfig(n_steps=1)
    res = local_minimize(lambda x: oat_xi2(n, x[0]), [0.05], cfg)
    assert res.x[0] == pytest.approx(t_grid, abs=1e-5)


@settings(max_examples=25, deadline=None)
@given(x0=st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_local_minimize_never_worse_than_start(x0):
    f = lambda x: float(np.sin(3 * x[0]) + np.cos(2 * x[1]) * x[2] ** 2 + 0.1 * np.sum(x**2))
    cfg = OptimizerConfig(n_steps=2, max_evals=300)
    res = local_minimize(f, x0, cfg)
    assert res.fun <= f(np.asarray(x0)) + 1e-15


def test_budget_exhaustion_reported():
    cfg = OptimizerConfig(n_steps=2, max_evals=20)
    res = local_minimize(lambda x: float(np.sum(np.cos(x))), [0.1, 0.2, 0.3], cfg)
    assert not res.converged
    assert res.evals <= 20


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(starts=0)
    with pytest.raises(ValueError):
        OptimizerConfig(t_max=0)
    with pytest.raises(ValueError):
        OptimizerConfig(x_tol=0)
    with pytest.raises(ValueError):
        PenaltyConfig(lam=-1)
    assert OptimizerConfig(n_steps=2).starts == 64
    assert OptimizerConfig(n_steps=3).starts == 256


# ---------------------------------------------------------------- baselines


def _dense_oat_scan(n, times):
    ops = operator_matrices(n)
    psi0 = np.linalg.eigh(ops["x"])[1][:, -1]
    m = np.diag(ops["z"]).real
    psi = np.exp(-1j * np.outer(times, m * m)) * psi0
    sx = np.einsum("ti,ij,tj->t", psi.conj(), ops["x"], psi).real
    yy = np.einsum("ti,ij,tj->t", psi.conj(), ops["y"] @ ops["y"], psi).real
    zz = np.einsum("ti,ij,tj->t", psi.conj(), ops["z"] @ ops["z"], psi).real
    yz = np.einsum("ti,ij,tj->t", psi.conj(), 0.5 * (ops["y"] @ ops["z"] + ops["z"] @ ops["y"]), psi).real
    v_min = 0.5 * (yy + zz) - np.hypot(0.5 * (yy - zz), yz)
    return n * v_min / sx**2


def test_oat_baseline_n2_brute_force():
    grid = np.linspace(1e-5, 1.0, 100_000)
    brute = _dense_oat_scan(2, grid)
    t, xi2 = oat_baseline(2)
    assert xi2 == pytest.approx(brute.min(), abs=1e-6)
    assert t == pytest.approx(grid[np.argmin(brute)], abs=1e-4)


@pytest.mark.parametrize("n", [10, 100, 1000])
def test_oat_baseline_matches_closed_form_scan(n):
    grid = np.geomspace(1e-4, 1.0, 400_001)
    values = kitagawa_ueda_xi2(n, grid)
    t, xi2 = oat_baseline(n)
    assert xi2 == pytest.approx(values.min(), rel=1e-7)
    assert xi2 <= values.min() + 1e-12


def test_oat_baseline_n1000_below_tenth():
    _, xi2 = oat_baseline(1000)
    assert xi2 < 0.1


def test_tat_small_n_against_dense():
    n = 6
    ops = operator_matrices(n)
    h = ops["x"] @ ops["x"] - ops["y"] @ ops["y"]
    psi0 = np.zeros(n + 1, complex)
    psi0[0] = 1
    from pulsesqueeze.spin import DickeState

    for t in (0.05, 0.2):
        expected = squeezing_parameter(DickeState(n, dense_expm(h, t) @ psi0)).xi2
        assert tat_xi2(n, t) == pytest.approx(expected, abs=1e-10)


def test_tat_beats_oat_at_100():
    _, tat = tat_baseline(100)
    _, oat = oat_baseline(100)
    assert tat < oat


# ---------------------------------------------------------------- protocol search


def test_single_step_search_equals_oat_baseline():
    n = 150
    cfg = OptimizerConfig(n_steps=1, starts=6)
    res = optimize_protocol(n, cfg)
    _, xi2 = oat_baseline(n)
    assert res.xi2 == pytest.approx(xi2, abs=cfg.f_tol * 10)
    assert res.xi2 >= xi2 - 1e-12


def test_search_is_deterministic():
    cfg = OptimizerConfig(n_steps=2, starts=3, seed=99)
    a = optimize_protocol(60, cfg)
    b = optimize_protocol(60, cfg)
    assert a == b


def test_result_reproduces_and_records_provenance():
    cfg = OptimizerConfig(n_steps=2, starts=3, seed=5)
    res = optimize_protocol(60, cfg)
    state, _ = run_protocol(60, res.protocol)
    assert squeezing_parameter(state).xi2 == pytest.approx(res.xi2, abs=cfg.f_tol)
    assert res.total_duration == pytest.approx(sum(res.protocol.durations))
    assert res.seed == 5 and res.starts_used == 3 and len(res.history) == 3
    assert list(res.history) == sorted(res.history, reverse=True)


def test_nesting_more_steps_never_worse():
    n = 80
    one = optimize_protocol(n, OptimizerConfig(n_steps=1, starts=4))
    two = optimize_protocol(n, OptimizerConfig(n_steps=2, starts=12))
    assert two.xi2 <= one.xi2 + 1e-10
    # embedding keeps the value exactly
    embedded = extend_steps(one, 2)
    assert objective(n, embedded.to_params()) == pytest.approx(one.xi2, abs=1e-12)


def test_warm_start_same_n_is_no_worse():
    n = 120
    cfg = OptimizerConfig(n_steps=2, starts=4)
    res = optimize_protocol(n, cfg)
    again = warm_start(n, res, cfg)
    assert again.xi2 <= res.xi2 + cfg.f_tol


def test_two_step_beats_oat_at_moderate_n():
    n = 300
    res = optimize_protocol(n, OptimizerConfig(n_steps=2, starts=8))
    assert res.xi2 < oat_baseline(n)[1]


# ---------------------------------------------------------------- pareto


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=30))
def test_pareto_filter_front_properties(points):
    front = pareto_filter(points)
    durations = [d for d, _ in front]
    values = [x for _, x in front]
    assert durations == sorted(durations)
    assert all(b < a for a, b in zip(values, values[1:]))
    for d, x in points:
        assert any(fd <= d and fx <= x for fd, fx in front)


def test_pareto_sweep_small():
    n = 100
    cfg = OptimizerConfig(n_steps=2, starts=6)
    start = optimize_protocol(n, cfg)
    penalty = PenaltyConfig(lambda_grid=(0.01, 0.1, 1.0, 10.0))
    pts = pareto_sweep(n, cfg, penalty, start=start)
    assert pts[0].lam == 0.0 and pts[0].xi2 == start.xi2
    durations = [p.total_duration for p in pts]
    assert durations[-1] < durations[0]
    with pytest.raises(ValueError):
        pareto_sweep(n, cfg, PenaltyConfig(lambda_grid=(1.0, 0.1)), start=start)
    with pytest.raises(ValueError):
        pareto_sweep(n, cfg, PenaltyConfig(lambda_grid=()), start=start)
