import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pulsesqueeze.analysis import (
    DepthCurve,
    ScalingPoint,
    block_bound,
    certify_depth,
    fit_power_law,
    log_spaced_sizes,
    noise_monte_carlo,
    optimal_squeezing_curve,
    perturb_protocol,
    relative_errors,
    scaling_study,
)
from pulsesqueeze.propagate import Protocol
from pulsesqueeze.spin import SqueezingReport, make_coherent_x, squeezing_parameter


# ---------------------------------------------------------------- power laws


def test_fit_exact_power_law():
    pts = [ScalingPoint(n, 4 * n**-0.92, "OPT2") for n in (100, 300, 1000, 5000)]
    fit = fit_power_law(pts)
    assert fit.beta == pytest.approx(0.92, abs=1e-10)
    assert fit.prefactor == pytest.approx(4.0, rel=1e-10)
    assert fit.residual < 1e-12


def test_fit_inverse_n():
    fit = fit_power_law([(n, 1 / n) for n in (10, 20, 40)])
    assert fit.beta == pytest.approx(1.0, abs=1e-12)
    assert fit.prefactor == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(beta=st.floats(0.1, 2.0), c=st.floats(0.01, 100.0), n0=st.integers(2, 100))
def test_fit_recovers_synthetic(beta, c, n0):
    ns = [n0, 3 * n0, 10 * n0, 31 * n0]
    fit = fit_power_law([(n, c * n**-beta) for n in ns])
    assert fit.beta == pytest.approx(beta, abs=1e-10)
    assert fit.prefactor == pytest.approx(c, rel=1e-10)


def test_fit_residual_is_log_rms():
    data = [(10, 0.5), (20, 0.2), (40, 0.13), (80, 0.05)]
    fit = fit_power_law(data)
    n, x = np.array(data).T
    rms = np.sqrt(np.mean((np.log(x) - np.log(fit.predict(n))) ** 2))
    assert fit.residual == pytest.approx(rms, rel=1e-12)


def test_fit_needs_three_points():
    with pytest.raises(ValueError):
        fit_power_law([(10, 0.1), (20, 0.05)])
    with pytest.raises(ValueError):
        fit_power_law([(10, 0.1), (10, 0.05), (20, 0.02)])


def test_scaling_point_validation():
    with pytest.raises(ValueError):
        ScalingPoint(100, 0.1, "XYZ")
    with pytest.raises(ValueError):
        ScalingPoint(100, -0.1, "OAT")


def test_log_spaced_sizes():
    sizes = log_spaced_sizes(100, 10_000)
    assert sizes[0] == 100 and sizes[-1] == 10_000
    assert len(sizes) == 17


def test_oat_scaling_small_range_is_sub_heisenberg():
    pts = scaling_study([50, 100, 200, 400], "OAT")
    fit = fit_power_law(pts)
    assert 0.5 < fit.beta < 0.75


def test_scaling_study_continuation_chain():
    from pulsesqueeze.optimize import OptimizerConfig

    cfg = OptimizerConfig(n_steps=2, starts=4, seed=3)
    pts = scaling_study([60, 80, 100], "OPT2", cfg)
    assert [p.N for p in pts] == [60, 80, 100]
    xs = [p.xi2 for p in pts]
    assert xs[0] > xs[1] > xs[2]


# ---------------------------------------------------------------- noise


PROTO = Protocol.from_params([0.03, -0.2, 0.1, -0.25, 0.2])


def test_noise_zero_error_is_ideal():
    env = noise_monte_carlo(40, PROTO, 0.0, trials=5, seed=1, points=30)
    np.testing.assert_array_equal(env.lo, env.hi)
    np.testing.assert_array_equal(env.mean, env.ideal)
    assert env.times[-1] == pytest.approx(PROTO.total_duration)


def test_noise_envelope_ordering_and_reproducibility():
    a = noise_monte_carlo(40, PROTO, 0.05, trials=8, seed=11, points=40)
    b = noise_monte_carlo(40, PROTO, 0.05, trials=8, seed=11, points=40)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.hi, b.hi)
    assert np.all(a.lo <= a.mean + 1e-15) and np.all(a.mean <= a.hi + 1e-15)
    assert a.times[-1] >= PROTO.total_duration * 0.95


def test_noise_gaussian_option():
    env = noise_monte_carlo(30, PROTO, 0.02, trials=4, seed=2, distribution="gaussian", points=10)
    assert env.trials == 4
    with pytest.raises(ValueError):
        relative_errors(3, 2, 0, "cauchy")


def test_common_random_numbers_scale_linearly():
    u = relative_errors(5, 3, seed=9)
    assert np.all(np.abs(u) <= 1)
    p = perturb_protocol(PROTO, 1 + 0.1 * u[0])
    np.testing.assert_allclose(
        p.to_params(), PROTO.to_params() * (1 + 0.1 * u[0]), atol=1e-15
    )
    assert p.segments[0].theta == 0.0


def test_noise_rejects_bad_inputs():
    with pytest.raises(ValueError):
        noise_monte_carlo(10, PROTO, -0.1)
    with pytest.raises(ValueError):
        noise_monte_carlo(10, PROTO, 0.1, trials=0)


# ---------------------------------------------------------------- depth curves


def test_single_spin_curve_constant():
    c = optimal_squeezing_curve(1, contrast_grid=np.linspace(0, 1, 11))
    np.testing.assert_allclose(c.f, 0.25)


@pytest.mark.parametrize("n", [2, 3, 10, 51])
def test_curve_coherent_limit_and_monotone(n):
    c = optimal_squeezing_curve(n)
    assert c(1.0) == pytest.approx(n / 4, rel=1e-12)
    # largest mu on the default grid sits close to the coherent point
    near = c.x[-2]
    assert near > 0.99
    assert c.f[-2] == pytest.approx(n / 4, rel=2e-3)
    assert np.all(np.diff(c.f) >= -1e-12)


def test_two_qubit_curve_matches_brute_force():
    # real symmetric two-qubit states: unit vectors over |m=1>, |0>, |-1>
    a = np.linspace(0, np.pi, 1201)
    b = np.linspace(0, 2 * np.pi, 2401)
    aa, bb = np.meshgrid(a, b, indexing="ij")
    c1, c0, cm = np.cos(aa), np.sin(aa) * np.cos(bb), np.sin(aa) * np.sin(bb)
    r = math.sqrt(2) / 2  # <1|j_x|0> = <0|j_x|-1>
    jx = 2 * r * (c1 * c0 + c0 * cm)
    x = (jx / 1.0).ravel()
    fz = (c1**2 + cm**2).ravel()
    curve = optimal_squeezing_curve(2)
    for target in np.linspace(0.05, 0.95, 10):
        band = (x >= target) & (x < target + 2e-3)
        brute = fz[band].min()
        assert curve(target) == pytest.approx(brute, abs=4e-3)
        assert curve(target) <= brute + 1e-9


@pytest.mark.parametrize("n,m", [(10, 20), (20, 50), (4, 8)])
def test_larger_blocks_allow_more_squeezing(n, m):
    small, big = optimal_squeezing_curve(n), optimal_squeezing_curve(m)
    grid = np.linspace(0.05, 0.999, 50)
    assert np.all(big(grid) / m <= small(grid) / n + 1e-9)


def test_curve_on_grid():
    grid = np.linspace(0.2, 1.0, 9)
    c = optimal_squeezing_curve(6, contrast_grid=grid)
    np.testing.assert_array_equal(c.x, grid)


def test_certify_coherent_state_gives_one():
    n = 200
    curves = [optimal_squeezing_curve(k) for k in (1, 2, 5, 20, 100, 200)]
    report = squeezing_parameter(make_coherent_x(n))
    assert certify_depth(n, report, curves) == 1


@settings(max_examples=25, deadline=None)
@given(v1=st.floats(0.1, 50.0), v2=st.floats(0.1, 50.0), length=st.floats(60.0, 99.0))
def test_certify_monotone_in_variance(v1, v2, length):
    n = 200
    curves = [optimal_squeezing_curve(k) for k in (1, 2, 4, 8, 16, 32, 64)]
    lo, hi = sorted((v1, v2))
    rep = lambda v: SqueezingReport(n * v / length**2, v, 0.0, length)
    assert certify_depth(n, rep(lo), curves) >= certify_depth(n, rep(hi), curves)


def test_block_bound_scaling():
    c = optimal_squeezing_curve(4)
    assert block_bound(100, c, 1.0) == pytest.approx(25.0)


def test_extrapolation_follows_power_laws():
    from pulsesqueeze.analysis import extrapolate_params

    law = lambda n: np.array([0.5 * n**-0.7, -2.0 * n**-0.3, 3.0 * n**0.1])
    chain = [(1000, law(1000)), (2000, law(2000))]
    np.testing.assert_allclose(extrapolate_params(5000, chain), law(5000), rtol=1e-12)
    assert extrapolate_params(5000, chain[:1]) is None
    flipped = [(1000, law(1000)), (2000, -law(2000))]
    assert extrapolate_params(5000, flipped) is None


def test_continuation_guess_never_worse_than_previous():
    from pulsesqueeze.analysis import continuation_guess
    from pulsesqueeze.optimize import objective

    prev = Protocol.from_params([0.02, -0.2, 0.1])
    bad_chain = [(50, np.array([0.001, -1.0, 0.9])), (60, prev.to_params())]
    guess = continuation_guess(80, bad_chain, prev)
    assert objective(80, guess.to_params()) <= objective(80, prev.to_params())
