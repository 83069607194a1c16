from fractions import Fraction

import numpy as np
import pytest

from hypoflow.decay import (
    fit_exponential,
    interpolation_check,
    interpolation_slack,
    min_form_epsilon,
    moment_track,
    recursion_verify,
)
from hypoflow.errors import InsufficientData


def test_fit_exact_exponential():
    t = np.arange(12) * 0.5
    y = np.exp(-t)
    fit = fit_exponential(t, y)
    assert fit.rate == pytest.approx(1.0, rel=1e-12)
    assert fit.residual <= 1e-12
    assert not fit.misfit


def test_fit_window_norms_recover_rate():
    # Y_n = e^{-n} at times nT: rate 1/T exactly
    window = 0.25
    n = np.arange(10)
    fit = fit_exponential(n * window, np.exp(-n * 1.0))
    assert fit.rate == pytest.approx(1.0 / window, rel=1e-12)


def test_fit_flags_algebraic_data():
    n = np.arange(1, 40)
    fit = fit_exponential(n.astype(float), (1.0 + n) ** -2.0)
    assert fit.misfit
    assert fit.rate > 0.0  # still reported


def test_fit_insufficient_data():
    with pytest.raises(InsufficientData):
        fit_exponential([0, 1, 2], [1.0, 0.5, 0.25])
    with pytest.raises(InsufficientData):
        fit_exponential(np.arange(6.0), [1, 1, 1, 0.0, 1, 1])


def test_recursion_zero_start():
    chk = recursion_verify(0.0, 0.5, 1.0, 50)
    assert np.all(chk.values == 0.0)


def test_recursion_telescoped_hand_value():
    # a = 1, eps = 1/2: the telescoped gain is eps/8 per step, so
    # 1/Y_64^2 >= 1 + 64 * (1/16) = 5
    chk = recursion_verify(1.0, 0.5, 1.0, 64)
    assert chk.one_step_ok and chk.telescope_ok
    # the telescoped bound (1 + n eps/8 ... ) = 5^{-1/2} ~ 0.447 is an
    # upper bound; the extremal sequence sits strictly below it
    assert chk.values[64] <= (1.0 + 64.0 / 16.0) ** -0.5 + 1e-12
    assert chk.values[64] > 0.0


@pytest.mark.parametrize("a", [0.25, 0.5, 1.0])
@pytest.mark.parametrize("eps", [0.1, 0.5])
def test_recursion_inequalities_hold_everywhere(a, eps):
    chk = recursion_verify(1.0, eps, a, 10_000)
    assert chk.one_step_ok, chk.failures
    assert chk.telescope_ok, chk.failures
    assert chk.tail_slope == pytest.approx(chk.expected_slope, rel=0.05)


def test_recursion_monotone_nonnegative():
    chk = recursion_verify(1.0, 0.3, 0.5, 200)
    assert np.all(np.diff(chk.values) <= 0.0)
    assert np.all(chk.values >= 0.0)


def test_interpolation_single_atom_equality():
    g = np.zeros(32)
    g[7] = 3.0
    x = np.linspace(-4, 4, 32)
    slack = interpolation_slack(g, np.ones(32), x, k=2.0, ell=1.0)
    assert abs(slack) <= 1e-12


def test_interpolation_never_violated_random():
    rng = np.random.default_rng(0)
    x = np.linspace(-10, 10, 64)
    inv_w = 1.0 / (1.0 + 0.5 * np.sin(x) ** 2)
    for _ in range(1000):
        g = rng.normal(size=64)
        slack = interpolation_slack(g, inv_w, x, k=2.0, ell=1.0)
        assert slack >= -1e-12


def test_interpolation_zero_field():
    x = np.linspace(-1, 1, 16)
    assert interpolation_slack(np.zeros(16), np.ones(16), x, 2.0, 1.0) == 0.0


def test_interpolation_check_over_run():
    rng = np.random.default_rng(1)
    x = np.linspace(-5, 5, 48)
    densities = [rng.normal(size=48) for _ in range(20)]
    worst = interpolation_check(densities, np.ones(48), x, k=3.0, ell=1.5)
    assert worst >= -1e-12


def test_moment_track_zero_and_closed_form():
    x = np.linspace(-4, 4, 33)[:-1] + 0.125  # uniform midpoints
    dx = x[1] - x[0]
    times = np.arange(3.0)
    zero = moment_track(times, [np.zeros_like(x)] * 3, x, dx, k=2)
    assert zero.bound == 0.0

    # homogeneous density: exact rational closed form via Fraction sums
    c = 0.75
    dens = np.full_like(x, c)
    series = moment_track(times, [dens] * 3, x, dx, k=2)
    fx = [Fraction(xi).limit_denominator(10**12) for xi in x]
    fdx = Fraction(dx).limit_denominator(10**12)
    fc = Fraction(3, 4)
    exact = sum(fc * fc * (1 + xi * xi) ** 2 * fdx for xi in fx)
    assert series.values[0] == pytest.approx(float(exact), rel=1e-10)
    assert not series.growing


def test_min_form_epsilon():
    # exact arithmetic check of the measured constant
    assert min_form_epsilon(2.0, 0.5, 1.0, 0.5) == pytest.approx(0.25)
    # S/T < 1 makes the power branch the minimum
    val = min_form_epsilon(0.5, 0.1, 1.0, 1.0)
    assert val == pytest.approx(0.1 / 0.25)
