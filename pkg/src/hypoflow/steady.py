"""Non-equilibrium stationary states and their structural constants.

Two independent routes to the same discrete null vector of the
generator.  The long-time route integrates forward-Euler on the
unsplit semi-discrete system (whose fixed points are exactly the null
space, unlike the split propagator) until the state stops moving; it is
matrix-free and is the default.  The nullspace route assembles the
generator and runs shifted inverse iteration; it is the desk-scale
oracle.  Both normalise total mass to one.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegenerateState, NegativeState, NoConvergence
from .grid import (
    PhaseField,
    SpatialField,
    d_dx,
    local_density,
    weighted_norm_sq,
    write_field,
)
from .model import KIND_FP, assemble_generator, generator_apply

log = logging.getLogger(__name__)


@dataclass
class StationaryState:
    """Stationary state plus everything the decay machinery needs."""

    f_stat: PhaseField
    density: SpatialField
    weight: SpatialField
    weight_terms: dict
    residual: float
    ball_min: float
    regularity: float
    z_norm: float
    method: str


def spatial_weight(f_stat, model):
    """Spatial weight 1 + force term + shape term + log-density term.

    Velocity integrals run over cells with |v| <= 1; x-derivatives are
    centred second order (one-sided at walls).  Each term is
    nonnegative so the weight is at least one everywhere.
    """
    g = model.grid
    ball = g.ball_mask()
    rho = f_stat.values.sum(axis=1) * g.dv
    term_force = (
        (f_stat.values[:, ball] * model.force[:, ball] ** 2).sum(axis=1) * g.dv / rho
    )
    ratio = f_stat.values / rho[:, None]
    dratio = d_dx(ratio.T, g.dx, g.wall_x).T
    term_shape = (np.abs(dratio[:, ball]).sum(axis=1) * g.dv) ** 2
    term_logdens = (d_dx(rho, g.dx, g.wall_x) / rho) ** 2
    w = 1.0 + term_force + term_shape + term_logdens
    terms = {
        "force": term_force,
        "shape": term_shape,
        "log_density": term_logdens,
    }
    return SpatialField(w, g), terms


def state_constants(f_stat, model):
    """Structural constants of the stationary state.

    ball_min: min of f_stat / density over the unit velocity ball.
    regularity: for fp the max of |d_v M| / M over the ball; for bgk the
    max over x of the ball integral of M^2 density / f_stat.
    """
    g = model.grid
    ball = g.ball_mask()
    rho = f_stat.values.sum(axis=1) * g.dv
    ratio = f_stat.values / rho[:, None]
    ball_min = float(ratio[:, ball].min())
    if ball_min <= 1e-12:
        raise DegenerateState(
            f"stationary state has ratio floor {ball_min:.3e} on the unit ball"
        )
    m = model.background
    if model.kind == KIND_FP:
        dm = np.empty_like(m)
        dm[:, 1:-1] = (m[:, 2:] - m[:, :-2]) / (2.0 * g.dv)
        dm[:, 0] = (m[:, 1] - m[:, 0]) / g.dv
        dm[:, -1] = (m[:, -1] - m[:, -2]) / g.dv
        regularity = float(np.abs(dm[:, ball] / m[:, ball]).max())
    else:
        regularity = float(
            ((m[:, ball] ** 2 / ratio[:, ball]).sum(axis=1) * g.dv).max()
        )
    return ball_min, regularity


def _finalize(values, model, method):
    g = model.grid
    z = float(values.sum()) * g.cell_measure
    values = values / z
    f_stat = PhaseField(values, g)
    af = generator_apply(f_stat, model)
    residual = float(np.sqrt((af.values**2).sum() * g.cell_measure))
    ball_min, regularity = state_constants(f_stat, model)
    weight, terms = spatial_weight(f_stat, model)
    return StationaryState(
        f_stat=f_stat,
        density=local_density(f_stat),
        weight=weight,
        weight_terms=terms,
        residual=residual,
        ball_min=ball_min,
        regularity=regularity,
        z_norm=z,
        method=method,
    )


def _forward_euler_dt(model):
    """Positivity-preserving explicit step for the unsplit system."""
    g = model.grid
    rate = np.abs(g.v)[None, :] / g.dx * np.ones((g.n_x, 1))
    gi = model.g_iface
    rate = rate + (np.maximum(gi[:, 1:], 0.0) + np.maximum(-gi[:, :-1], 0.0)) / g.dv
    if model.kind == KIND_FP:
        m = model.background
        mi = model.m_iface
        coll = np.zeros_like(m)
        coll[:, :-1] += mi
        coll[:, 1:] += mi
        rate = rate + coll / (g.dv**2 * m)
    else:
        rate = rate + 1.0
    return 0.9 / float(rate.max())


def compute_stationary(
    model,
    method="long_time",
    tol=1e-10,
    max_steps=2_000_000,
    check_every=200,
    initial=None,
):
    """Stationary state by the requested method, mass-normalised.

    long_time: forward-Euler on the unsplit system from M x (uniform
    density) until the state moves slower than tol per unit time in the
    self-weighted norm.  nullspace: shifted inverse iteration on the
    assembled generator; raises NegativeState when the null vector is
    not sign-definite beyond 1e-8 relative (under-resolved grid).
    """
    g = model.grid
    if method == "long_time":
        if initial is None:
            f = model.background / g.length_x
        else:
            f = initial.values / (initial.values.sum() * g.cell_measure)
        dt = _forward_euler_dt(model)
        span = check_every * dt
        prev = f.copy()
        for it in range(1, max_steps + 1):
            f = f + dt * generator_apply(PhaseField(f, g), model).values
            if it % check_every == 0:
                diff = PhaseField(f - prev, g)
                wref = PhaseField(np.maximum(f, 1e-300), g)
                speed = np.sqrt(weighted_norm_sq(diff, wref)) / span
                if speed < tol:
                    log.info("long_time converged after %d steps (dt=%.3g)", it, dt)
                    return _finalize(f, model, "long_time")
                prev = f.copy()
        raise NoConvergence(
            f"long_time stationary solve: {max_steps} steps without reaching {tol:g}"
        )

    if method == "nullspace":
        a = assemble_generator(model, "generator", dense=False)
        n = a.shape[0]
        sigma = 1e-10 * abs(a.diagonal()).max()
        lu = spla.splu(sp.csc_matrix(a - sigma * sp.identity(n)))
        x = np.ones(n)
        x /= np.linalg.norm(x)
        for _ in range(8):
            y = lu.solve(x)
            norm = np.linalg.norm(y)
            if not np.isfinite(norm) or norm == 0.0:
                raise NoConvergence("inverse iteration produced a degenerate vector")
            x = y / norm
            if np.linalg.norm(a @ x) < 1e-12 * abs(a.diagonal()).max():
                break
        if x.sum() < 0:
            x = -x
        if x.min() < -1e-8 * x.max():
            raise NegativeState(
                f"null vector has negative part {x.min() / x.max():.3e} of its peak"
            )
        x = np.maximum(x, 0.0)
        return _finalize(x.reshape(g.n_x, g.n_v), model, "nullspace")

    raise ValueError(f"unknown method {method!r}")


def gibbs_state(model, potential):
    """Candidate state background * exp(-potential(x)), mass-normalised.

    For an isothermal background with force G = -potential' this is
    stationary up to the transport discretisation error; its residual is
    the standard cross-check of the steady machinery.
    """
    g = model.grid
    values = model.background * np.exp(-np.asarray(potential))[:, None]
    values /= values.sum() * g.cell_measure
    return PhaseField(values, g)


def stationarity_residual(candidate, model):
    """Unweighted L2 norm of A applied to a candidate state."""
    af = generator_apply(candidate, model)
    return float(np.sqrt((af.values**2).sum() * model.grid.cell_measure))


def states_agree(state_a, state_b):
    """Weighted-norm distance between two stationary states."""
    diff = state_a.f_stat - state_b.f_stat
    return float(np.sqrt(weighted_norm_sq(diff, state_a.f_stat)))


def save_state(out_dir, state, model, config_hash=""):
    """Persist: binary snapshot, per-x CSV and a JSON summary record."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_field(out / "f_stationary.bin", state.f_stat)
    g = model.grid
    with open(out / "stationary.csv", "w", newline="") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        fh.write("x,density,weight,term_force,term_shape,term_log_density\n")
        for i, xi in enumerate(g.x):
            fh.write(
                f"{xi:.17g},{state.density.values[i]:.17g},"
                f"{state.weight.values[i]:.17g},"
                f"{state.weight_terms['force'][i]:.17g},"
                f"{state.weight_terms['shape'][i]:.17g},"
                f"{state.weight_terms['log_density'][i]:.17g}\n"
            )
    summary = {
        "config_hash": config_hash,
        "method": state.method,
        "residual": state.residual,
        "ball_min": state.ball_min,
        "regularity": state.regularity,
        "z_norm": state.z_norm,
    }
    with open(out / "stationary_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
