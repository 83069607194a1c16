import numpy as np
import pytest
from scipy.linalg import expm

from hypoflow.errors import CflViolation
from hypoflow.evolution import (
    bgk_jump_dissipation,
    cfl_limit,
    dissipation,
    dissipation_total,
    evolve,
    step,
    trajectory_to_csv,
)
from hypoflow.grid import PhaseField, weighted_norm_sq
from hypoflow.model import assemble_generator
from hypoflow.steady import compute_stationary

from conftest import make_grid, make_model, random_field, zero_mass_perturbation


def stat_field(grid, model, rng):
    vals = np.abs(rng.normal(1.0, 0.2, (grid.n_x, grid.n_v))) * model.background + 1e-3
    return PhaseField(vals / (vals.sum() * grid.cell_measure), grid)


def test_cfl_violation():
    g = make_grid()
    model = make_model(g, "bgk")
    f = PhaseField(np.ones((g.n_x, g.n_v)), g)
    with pytest.raises(CflViolation):
        step(f, model, dt=10.0 * cfl_limit(model))


def test_zero_stays_zero():
    g = make_grid()
    model = make_model(g, "bgk")
    f = PhaseField(np.zeros((g.n_x, g.n_v)), g)
    out = step(f, model, dt=0.5 * cfl_limit(model))
    assert np.all(out.values == 0.0)


@pytest.mark.parametrize("kind", ["fp", "bgk"])
def test_step_mass_conservation(kind):
    g = make_grid()
    model = make_model(g, kind)
    rng = np.random.default_rng(0)
    f = PhaseField(model.background * (1 + 0.5 * rng.normal(size=(g.n_x, g.n_v))), g)
    mass0 = f.mass()
    out = step(f, model, dt=0.5 * cfl_limit(model))
    assert abs(out.mass() - mass0) <= 1e-12 * abs(mass0)


def test_stationary_state_is_step_fixed_point(bgk_small):
    # the stationary state is a fixed point up to the stationarity
    # residual plus the O(dt^3) local splitting error of one step
    g, model, state = bgk_small
    drifts = []
    for dt in (0.5 * cfl_limit(model), 0.25 * cfl_limit(model)):
        out = step(state.f_stat, model, dt=dt)
        drifts.append(np.sqrt(weighted_norm_sq(out - state.f_stat, state.f_stat)))
    assert drifts[0] <= 1e-6
    assert drifts[0] / drifts[1] > 6.0  # cubic in dt once the residual is tiny


@pytest.mark.parametrize("kind", ["bgk", "fp"])
def test_step_matches_matrix_exponential(kind):
    # one Strang step against expm of the assembled generator: local
    # error O(dt^3), so halving dt divides the defect by about eight
    g = make_grid(n_x=8, n_v=8, v_max=4.0)
    model = make_model(g, kind)
    f0 = PhaseField(
        model.background
        * (1 + 0.3 * np.sin(2 * np.pi * g.x / g.length_x)[:, None] * (1 + 0.2 * g.v)),
        g,
    )
    a = assemble_generator(model, "generator", dense=True)
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        exact = expm(a * dt) @ f0.values.ravel()
        approx = step(f0, model, dt=dt).values.ravel()
        errs.append(np.linalg.norm(approx - exact))
    assert errs[0] / errs[1] > 5.0
    assert errs[1] / errs[2] > 5.0


@pytest.mark.parametrize("kind", ["fp", "bgk"])
def test_dissipation_nonnegative_on_random_fields(kind):
    g = make_grid(n_x=16, n_v=16)
    model = make_model(g, kind)
    rng = np.random.default_rng(1)
    f_stat = stat_field(g, model, rng)
    for _ in range(1000):
        f = random_field(g, rng)
        assert dissipation(f, model, f_stat) >= 0.0


@pytest.mark.parametrize("kind", ["fp", "bgk"])
def test_dissipation_vanishes_on_local_equilibria(kind):
    g = make_grid()
    model = make_model(g, kind)
    rng = np.random.default_rng(2)
    f_stat = stat_field(g, model, rng)
    c = 1.0 + 0.5 * np.sin(2 * np.pi * g.x / g.length_x)
    f = PhaseField(c[:, None] * f_stat.values, g)
    assert dissipation(f, model, f_stat) <= 1e-15


@pytest.mark.parametrize("kind", ["fp", "bgk"])
def test_dissipation_matches_operator_quadratic_form(kind):
    # D = -<f, S f> with S the assembled dissipation operator, exactly
    g = make_grid(n_x=12, n_v=14)
    model = make_model(g, kind)
    rng = np.random.default_rng(3)
    f_stat = stat_field(g, model, rng)
    s_mat = assemble_generator(model, "dissipation", f_stat=f_stat, dense=True)
    w = g.cell_measure / f_stat.values.ravel()
    for _ in range(25):
        f = random_field(g, rng)
        fv = f.values.ravel()
        oracle = -(fv * (s_mat @ fv) * w).sum()
        assert dissipation(f, model, f_stat) == pytest.approx(oracle, rel=1e-10)


def test_bgk_jump_form_equals_reduced_form():
    g = make_grid(n_x=10, n_v=12)
    model = make_model(g, "bgk")
    rng = np.random.default_rng(4)
    f_stat = stat_field(g, model, rng)
    for _ in range(10):
        f = random_field(g, rng)
        jump = bgk_jump_dissipation(f, model, f_stat)
        assert dissipation(f, model, f_stat) == pytest.approx(jump, rel=1e-12)


def test_bgk_two_point_hand_formula():
    # two velocity cells: D = 1/2 (a-b)^2 (fs(v1) M(v2) + fs(v2) M(v1)) dx dv^2
    g = make_grid(n_x=4, n_v=2, v_max=2.0)
    m = np.abs(np.random.default_rng(5).normal(1.0, 0.2, (4, 2))) + 0.5
    from hypoflow.model import KineticModel

    model = KineticModel("bgk", m, np.zeros((4, 2)), g)
    fs = np.abs(np.random.default_rng(6).normal(1.0, 0.2, (4, 2))) + 0.5
    f_stat = PhaseField(fs, g)
    u = np.random.default_rng(7).normal(size=(4, 2))
    f = PhaseField(u * fs, g)
    mm = model.background
    hand = 0.5 * np.sum(
        (u[:, 0] - u[:, 1]) ** 2
        * (fs[:, 0] * mm[:, 1] + fs[:, 1] * mm[:, 0])
        * g.dx
        * g.dv**2
    )
    assert dissipation(f, model, f_stat) == pytest.approx(hand, rel=1e-12)


def test_evolve_zero_initial_data(bgk_small):
    g, model, state = bgk_small
    f0 = PhaseField(np.zeros((g.n_x, g.n_v)), g)
    traj = evolve(f0, model, state.f_stat, window=20 * g.dt)
    assert np.all(traj.norm_sq == 0.0)
    assert traj.zero_mean


def test_evolve_norms_decrease(bgk_small):
    g, model, state = bgk_small
    f0 = zero_mass_perturbation(state, g)
    traj = evolve(f0, model, state.f_stat, window=100 * g.dt)
    assert abs(traj.mass).max() <= 1e-12
    assert np.all(np.diff(traj.norm_sq) < 0.0)
    assert traj.dissipation.min() >= 0.0
    assert traj.dissipation_total.min() >= 0.0


def test_energy_balance_second_order(bgk_small):
    g, model, state = bgk_small
    f0 = zero_mass_perturbation(state, g)
    defects = []
    for dt in (g.dt, g.dt / 2.0):
        traj = evolve(f0, model, state.f_stat, window=16 * g.dt, dt=dt)
        defects.append(traj.balance_defect[1:].max())
    ratio = defects[0] / defects[1]
    assert 3.0 <= ratio <= 5.0


def test_trajectory_csv(tmp_path, bgk_small):
    g, model, state = bgk_small
    f0 = zero_mass_perturbation(state, g)
    traj = evolve(f0, model, state.f_stat, window=5 * g.dt)
    path = tmp_path / "traj.csv"
    trajectory_to_csv(path, traj)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,mass,norm_sq,dissipation,balance_defect"
    assert len(lines) == 1 + 6


def test_snapshot_striding():
    g = make_grid(n_x=8, n_v=8)
    model = make_model(g, "bgk")
    state = compute_stationary(model, method="nullspace")
    f0 = zero_mass_perturbation(state, g)
    traj = evolve(f0, model, state.f_stat, window=8 * g.dt, snapshot_stride=4)
    assert len(traj.snapshots) == 3  # steps 0, 4, 8
    with pytest.raises(IndexError):
        traj.field_at(3)
    assert traj.field_at(8) is traj.snapshots[-1]
