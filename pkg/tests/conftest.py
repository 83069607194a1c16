import numpy as np
import pytest

from hypoflow.grid import Grid, PhaseField
from hypoflow.model import KineticModel, maxwellian_background
from hypoflow.steady import compute_stationary


def make_grid(n_x=32, n_v=32, length_x=2 * np.pi, v_max=6.0, dt=2e-3, window=0.5,
              wall_x=False):
    return Grid(n_x=n_x, length_x=length_x, n_v=n_v, v_max=v_max, dt=dt,
                window=window, wall_x=wall_x)


def make_model(grid, kind="bgk", temp_amp=0.5, force=None, transport_order=1):
    temp = 1.0 + temp_amp * np.sin(2 * np.pi * grid.x / grid.length_x)
    background = maxwellian_background(grid, temp)
    if force is None:
        force = np.zeros((grid.n_x, grid.n_v))
    return KineticModel(kind=kind, background=background, force=force, grid=grid,
                        transport_order=transport_order)


def random_field(grid, rng, scale=1.0):
    return PhaseField(scale * rng.normal(size=(grid.n_x, grid.n_v)), grid)


def zero_mass_perturbation(state, grid, phase=0.7):
    p = state.f_stat.values * np.sin(2 * np.pi * grid.x / grid.length_x + phase)[:, None]
    p = p - (p.sum() * grid.cell_measure) * state.f_stat.values
    return PhaseField(p, grid)


@pytest.fixture(scope="session")
def bgk_small():
    grid = make_grid()
    model = make_model(grid, "bgk")
    state = compute_stationary(model, method="nullspace")
    return grid, model, state


@pytest.fixture(scope="session")
def fp_small():
    grid = make_grid()
    model = make_model(grid, "fp")
    state = compute_stationary(model, method="nullspace")
    return grid, model, state


@pytest.fixture(scope="session")
def bgk_medium():
    grid = make_grid(n_x=64, n_v=64, dt=5e-3, window=0.5)
    model = make_model(grid, "bgk")
    state = compute_stationary(model, method="nullspace")
    return grid, model, state
