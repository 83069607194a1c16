import math

import numpy as np
import pytest

from hypoflow.errors import DegenerateWeight, DimensionMismatch
from hypoflow.grid import (
    Grid,
    PhaseField,
    field_to_csv,
    local_density,
    read_field,
    weighted_norm_sq,
    weighted_norm_sq_spacetime,
    write_field,
)

from conftest import make_grid, random_field


def test_grid_validation():
    with pytest.raises(ValueError):
        make_grid(v_max=1.5)  # unit ball must be interior
    with pytest.raises(ValueError):
        Grid(n_x=8, length_x=-1.0, n_v=8, v_max=6.0, dt=1e-3, window=1.0)


def test_quadrature_weights_sum_exactly():
    g = make_grid(n_x=48, n_v=40, length_x=3.7, v_max=5.0)
    assert g.dx * g.n_x == pytest.approx(3.7, abs=0)
    ones = PhaseField(np.ones((g.n_x, g.n_v)), g)
    assert ones.mass() == pytest.approx(3.7 * 10.0, rel=1e-15)


def test_local_density_zero_and_constant():
    g = make_grid()
    zero = PhaseField(np.zeros((g.n_x, g.n_v)), g)
    assert np.all(local_density(zero).values == 0.0)
    ones = PhaseField(np.ones((g.n_x, g.n_v)), g)
    dens = local_density(ones).values
    assert dens == pytest.approx(np.full(g.n_x, 2 * g.v_max), rel=1e-14)


def test_local_density_gaussian_matches_quadrature_oracle():
    # unit-mass Gaussian per column: midpoint sum deviates from the exact
    # velocity integral only by the (superalgebraically small) tail terms
    g = make_grid(n_x=4, n_v=64, v_max=6.0)
    col = np.exp(-g.v**2 / 2.0) / math.sqrt(2 * math.pi)
    f = PhaseField(np.tile(col, (g.n_x, 1)), g)
    exact = math.erf(6.0 / math.sqrt(2.0))  # integral over [-v_max, v_max]
    dens = local_density(f).values
    assert np.abs(dens - 1.0).max() <= 1e-8
    assert np.abs(dens - exact).max() <= 1e-8


def test_local_density_linear():
    g = make_grid()
    rng = np.random.default_rng(0)
    f1, f2 = random_field(g, rng), random_field(g, rng)
    combo = PhaseField(2.5 * f1.values - 1.5 * f2.values, g)
    expect = 2.5 * local_density(f1).values - 1.5 * local_density(f2).values
    assert np.abs(local_density(combo).values - expect).max() <= 1e-12


def test_weighted_norm_zero_and_mass_identity():
    g = make_grid()
    rng = np.random.default_rng(1)
    f_stat = PhaseField(np.abs(rng.normal(1.0, 0.1, (g.n_x, g.n_v))), g)
    f_stat = PhaseField(f_stat.values / f_stat.mass(), g)
    zero = PhaseField(np.zeros((g.n_x, g.n_v)), g)
    assert weighted_norm_sq(zero, f_stat) == 0.0
    # ||f_stat||^2 = integral of f_stat = its mass = 1
    assert weighted_norm_sq(f_stat, f_stat) == pytest.approx(1.0, rel=1e-13)


def test_weighted_norm_matches_dense_quadratic_form():
    g = make_grid(n_x=16, n_v=16)
    rng = np.random.default_rng(2)
    f = random_field(g, rng)
    f_stat = PhaseField(np.abs(rng.normal(1.0, 0.2, (g.n_x, g.n_v))) + 0.1, g)
    w_mat = np.diag(g.cell_measure / f_stat.values.ravel())
    oracle = f.values.ravel() @ w_mat @ f.values.ravel()
    assert weighted_norm_sq(f, f_stat) == pytest.approx(oracle, rel=1e-12)


def test_weighted_norm_positive_definite():
    g = make_grid(n_x=12, n_v=12)
    rng = np.random.default_rng(3)
    f_stat = PhaseField(np.abs(rng.normal(1.0, 0.2, (g.n_x, g.n_v))) + 0.1, g)
    for _ in range(50):
        f = random_field(g, rng)
        assert weighted_norm_sq(f, f_stat) > 0.0


def test_degenerate_weight_raises():
    g = make_grid(n_x=8, n_v=8)
    f_stat_vals = np.ones((g.n_x, g.n_v))
    f_stat_vals[3, 4] = 0.0
    f_stat = PhaseField(f_stat_vals, g)
    f = PhaseField(np.ones((g.n_x, g.n_v)), g)
    with pytest.raises(DegenerateWeight):
        weighted_norm_sq(f, f_stat)
    # zero field where the weight degenerates is fine
    ok = np.ones((g.n_x, g.n_v))
    ok[3, 4] = 0.0
    assert weighted_norm_sq(PhaseField(ok, g), f_stat) > 0.0


def test_spacetime_norm_trapezoid():
    g = make_grid(n_x=8, n_v=8, dt=0.25)
    f_stat = PhaseField(np.full((g.n_x, g.n_v), 0.7), g)
    zero = PhaseField(np.zeros((g.n_x, g.n_v)), g)
    assert weighted_norm_sq_spacetime([zero] * 5, f_stat) == 0.0

    # constant-in-time: trapezoid is exact, integral = T * ||f||^2
    f = PhaseField(np.ones((g.n_x, g.n_v)), g)
    nsq = weighted_norm_sq(f, f_stat)
    total = weighted_norm_sq_spacetime([f] * 5, f_stat)
    assert total == pytest.approx(4 * g.dt * nsq, rel=1e-14)

    # per-slice norm linear in the index: closed-form trapezoid sum
    a, b = 2.0, 0.5
    fields = [PhaseField(math.sqrt(a + b * k) * f.values, g) for k in range(5)]
    total = weighted_norm_sq_spacetime(fields, f_stat)
    norms = [(a + b * k) * nsq for k in range(5)]
    closed = g.dt * (0.5 * norms[0] + sum(norms[1:-1]) + 0.5 * norms[-1])
    assert total == pytest.approx(closed, rel=1e-12)


def test_dimension_mismatch():
    g1, g2 = make_grid(n_x=8, n_v=8), make_grid(n_x=8, n_v=10)
    f1 = PhaseField(np.zeros((8, 8)), g1)
    f2 = PhaseField(np.zeros((8, 10)), g2)
    with pytest.raises(DimensionMismatch):
        weighted_norm_sq(f1, PhaseField(np.ones((8, 10)), g2))
    with pytest.raises(DimensionMismatch):
        _ = f1 + f2


def test_binary_roundtrip(tmp_path):
    g = make_grid(n_x=10, n_v=14, length_x=3.0, v_max=4.0)
    rng = np.random.default_rng(4)
    f = random_field(g, rng)
    path = tmp_path / "snap.bin"
    write_field(path, f)
    back = read_field(path, g)
    assert np.array_equal(back.values, f.values)
    # header carries the geometry
    bare = read_field(path)
    assert bare.grid.n_x == 10 and bare.grid.v_max == 4.0


def test_csv_export(tmp_path):
    g = make_grid(n_x=3, n_v=2)
    f = PhaseField(np.arange(6, dtype=float).reshape(3, 2), g)
    path = tmp_path / "snap.csv"
    field_to_csv(path, f)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x,v,value"
    assert len(lines) == 1 + 6
    x, v, val = (float(s) for s in lines[1].split(","))
    assert (x, v, val) == (g.x[0], g.v[0], 0.0)
