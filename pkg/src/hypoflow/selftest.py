"""Deterministic invariant suite behind the selftest subcommand.

Runs a reduced copy of the scenario (at most 64x64 cells) through the
structural checks: conservation, nonnegative dissipation, algebraic
adjointness, operator kernels, quadrature exactness and the moment
identities of the test functions.  All randomness is seeded, summation
orders are fixed, so two runs with the same scenario produce identical
bytes.
"""

from dataclasses import dataclass

import numpy as np

from .coercivity import build_test_functions
from .evolution import dissipation, evolve
from .grid import PhaseField, local_density, weighted_dot, weighted_norm_sq
from .model import (
    KIND_FP,
    assemble_generator,
    collision_apply,
    generator_apply,
)
from .scenario import build_grid, build_model, build_perturbation
from .steady import compute_stationary


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float

    @property
    def passed(self):
        return self.value <= self.threshold


def _reduced(config):
    data = config.to_dict()
    data["n_x"] = min(config.n_x, 64)
    data["n_v"] = min(config.n_v, 64)
    from .scenario import ScenarioConfig

    return ScenarioConfig.from_dict(data)


def run(config, seed=0, n_random=200):
    config = _reduced(config)
    grid = build_grid(config)
    model = build_model(config, grid)
    rng = np.random.default_rng(seed)
    results = []

    # quadrature exactness: integrating 1 over phase space
    ones = PhaseField(np.ones((grid.n_x, grid.n_v)), grid)
    quad = abs(ones.mass() - grid.length_x * 2.0 * grid.v_max)
    results.append(CheckResult("quadrature_exactness", quad, 1e-12))

    state = compute_stationary(model, method="long_time")
    results.append(CheckResult("stationary_residual", state.residual, 1e-7))
    results.append(
        CheckResult("weight_at_least_one", 1.0 - state.weight.values.min(), 1e-12)
    )

    # collision kernel annihilation
    if model.kind == KIND_FP:
        lm = collision_apply(PhaseField(model.background, grid), model)
        results.append(
            CheckResult("collision_annihilates_background",
                        float(np.abs(lm.values).max()), 1e-13)
        )
    else:
        c_of_x = 1.0 + 0.5 * np.sin(2 * np.pi * np.arange(grid.n_x) / grid.n_x)
        lb = collision_apply(
            PhaseField(c_of_x[:, None] * model.background, grid), model
        )
        results.append(
            CheckResult("collision_annihilates_local_equilibria",
                        float(np.abs(lb.values).max()), 1e-13)
        )

    # adjointness and antisymmetric cancellation on random pairs
    fs = state.f_stat
    a_mat = assemble_generator(model, "generator", dense=True)
    a_adj = assemble_generator(model, "adjoint", f_stat=fs, dense=True)
    worst_adj = 0.0
    worst_anti = 0.0
    worst_diss = 0.0
    for _ in range(8):
        fv = rng.normal(size=(grid.n_x, grid.n_v))
        gv = rng.normal(size=(grid.n_x, grid.n_v))
        f = PhaseField(fv, grid)
        gfield = PhaseField(gv, grid)
        lhs = weighted_dot(PhaseField((a_mat @ fv.ravel()).reshape(fv.shape), grid),
                           gfield, fs)
        rhs = weighted_dot(f, PhaseField((a_adj @ gv.ravel()).reshape(gv.shape), grid),
                           fs)
        scale = np.sqrt(weighted_norm_sq(f, fs) * weighted_norm_sq(gfield, fs))
        worst_adj = max(worst_adj, abs(lhs - rhs) / scale)
        anti = 0.5 * ((a_mat - a_adj) @ fv.ravel())
        q = float((fv.ravel() * anti / fs.values.ravel()).sum()) * grid.cell_measure
        qs = abs(
            float((fv.ravel() * (a_mat @ fv.ravel()) / fs.values.ravel()).sum())
            * grid.cell_measure
        )
        worst_anti = max(worst_anti, abs(q) / max(qs, 1e-300))
        d = dissipation(f, model, fs)
        worst_diss = max(worst_diss, -d)
    results.append(CheckResult("algebraic_adjointness", worst_adj, 1e-10))
    results.append(CheckResult("antisymmetric_cancellation", worst_anti, 1e-10))
    results.append(CheckResult("dissipation_nonnegative", worst_diss, 1e-13))

    # random-field dissipation sign at volume
    worst = 0.0
    for _ in range(n_random):
        f = PhaseField(rng.normal(size=(grid.n_x, grid.n_v)), grid)
        worst = max(worst, -dissipation(f, model, fs))
    results.append(CheckResult("dissipation_nonnegative_bulk", worst, 1e-13))

    # mass conservation and zero-mean preservation along a short run
    f0 = build_perturbation(config, state, grid)
    traj = evolve(f0, model, fs, window=20 * grid.dt)
    drift = float(np.abs(traj.mass - traj.mass[0]).max())
    scale = float(np.abs(f0.values).max()) * grid.cell_measure
    results.append(CheckResult("mass_conservation", drift / max(scale, 1e-300), 1e-12))
    results.append(
        CheckResult("norms_nonincreasing", float(np.diff(traj.norm_sq).max()), 1e-12)
    )

    # density linearity
    f1 = PhaseField(rng.normal(size=(grid.n_x, grid.n_v)), grid)
    f2 = PhaseField(rng.normal(size=(grid.n_x, grid.n_v)), grid)
    lin = local_density(PhaseField(2.0 * f1.values + 3.0 * f2.values, grid)).values
    lin -= 2.0 * local_density(f1).values + 3.0 * local_density(f2).values
    results.append(CheckResult("density_linearity", float(np.abs(lin).max()), 1e-12))

    # test-function moment identities
    tf = build_test_functions(state, model)
    vmono = np.stack([np.ones(grid.n_v), grid.v])
    ratio = state.f_stat.values / state.density.values[:, None]
    mom = np.einsum("xX,iX,jxX->xij", ratio, vmono, tf.psi) * grid.dv
    err = float(np.abs(mom - np.eye(2)[None]).max())
    results.append(CheckResult("moment_identities", err, 1e-10))
    outside = float(np.abs(tf.psi[:, :, np.abs(grid.v) >= 1.0]).max(initial=0.0))
    results.append(CheckResult("test_function_support", outside, 0.0))

    return results
