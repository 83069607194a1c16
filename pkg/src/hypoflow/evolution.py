"""Time integration and dissipation functionals along trajectories.

One step is Strang-split: a second-order (Heun) transport half-step, a
full collision step (Crank-Nicolson tridiagonal solve for fp, exact
relaxation for bgk), and another transport half-step.  Every substep is
conservative, so mass is preserved to round-off and zero-mean initial
data stays zero-mean.

Two dissipation functionals are tracked.  ``dissipation`` is the
velocity-space collision form (Dirichlet form for fp, jump form for
bgk); it is nonnegative on every field and is the quantity entering the
decay certificates.  ``dissipation_total`` is -<f, A f> in the weighted
product, which adds the upwind numerical diffusion of the transport and
is the exact rate of norm decay of the semi-discrete system; the
per-step energy-balance defect is measured against it and shrinks as
O(dt^2).
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CflViolation
from .grid import Grid, PhaseField, weighted_norm_sq
from .model import KIND_FP, fp_dissipation_weights, generator_apply

SNAPSHOT_CELL_LIMIT = 2**16


def cfl_limit(model):
    """Largest stable time step for the explicit transport substeps."""
    g = model.grid
    limit = g.dx / g.v_max
    gmax = model.max_force()
    if gmax > 0.0:
        limit = min(limit, g.dv / gmax)
    return 0.9 * limit


def _transport_half(fv, model, half):
    """Heun step of the transport flow over ``half`` time units."""
    g = model.grid
    k1 = kernels.transport_rhs(
        fv, g.v, model.g_iface, g.dx, g.dv, model.transport_order, g.wall_x
    )
    k2 = kernels.transport_rhs(
        fv + half * k1, g.v, model.g_iface, g.dx, g.dv, model.transport_order, g.wall_x
    )
    return fv + 0.5 * half * (k1 + k2)


def step(f, model, dt=None, check_cfl=True):
    """One Strang-split step of length dt (default: grid dt)."""
    g = model.grid
    if dt is None:
        dt = g.dt
    if check_cfl and dt > cfl_limit(model):
        raise CflViolation(
            f"dt={dt:g} exceeds the advective limit {cfl_limit(model):g}"
        )
    fv = _transport_half(f.values, model, dt / 2.0)
    if model.kind == KIND_FP:
        fv = kernels.fp_cn_solve(fv, model.background, model.m_iface, g.dv, dt)
    else:
        fv = kernels.bgk_relax(fv, model.background, g.dv, dt)
    fv = _transport_half(fv, model, dt / 2.0)
    return PhaseField(fv, g)


def dissipation(f, model, f_stat):
    """Collision dissipation; a perfect square, nonnegative on any field."""
    g = model.grid
    if model.kind == KIND_FP:
        w = fp_dissipation_weights(model, f_stat)
        terms = kernels.fp_dissipation_terms(f.values, f_stat.values, w, g.dv)
        return float(terms.sum()) * g.cell_measure
    # jump form, reduced per column by expanding the square; shifting u by
    # its background mean leaves the value unchanged (the form only sees
    # differences of u) and removes the cancellation near local equilibria
    fs = f_stat.values
    m = model.background
    u = f.values / fs
    u = u - ((u * m).sum(axis=1) * g.dv)[:, None]
    col_mass = fs.sum(axis=1) * g.dv
    m_mass = m.sum(axis=1) * g.dv  # exactly 1 after renormalisation
    per_col = 0.5 * (
        (u * u * fs).sum(axis=1) * g.dv * m_mass
        + col_mass * (u * u * m).sum(axis=1) * g.dv
    ) - ((u * fs).sum(axis=1) * g.dv) * ((u * m).sum(axis=1) * g.dv)
    return float(per_col.sum()) * g.dx


def bgk_jump_dissipation(f, model, f_stat):
    """Literal double velocity integral of the bgk jump form.

    O(n_x n_v^2); used to cross-check the reduced evaluation in
    ``dissipation`` (the two agree exactly by expanding the square).
    """
    g = model.grid
    u = f.values / f_stat.values
    diff = u[:, :, None] - u[:, None, :]
    ker = f_stat.values[:, :, None] * model.background[:, None, :]
    return 0.5 * float((diff * diff * ker).sum()) * g.dx * g.dv * g.dv


def dissipation_total(f, model, f_stat):
    """-<f, A f> in the weighted product: collision dissipation plus the
    upwind transport diffusion (and the stationarity defect of f_stat)."""
    af = generator_apply(f, model)
    return -float(
        (f.values * af.values / f_stat.values).sum()
    ) * model.grid.cell_measure


@dataclass
class Trajectory:
    """Snapshots and per-step scalars of one evolution run."""

    grid: Grid
    times: np.ndarray
    snapshots: list
    snapshot_stride: int
    mass: np.ndarray
    norm_sq: np.ndarray
    dissipation: np.ndarray
    dissipation_total: np.ndarray
    balance_defect: np.ndarray
    final_field: object = None
    zero_mean: bool = field(default=False)

    def field_at(self, step_index):
        """Snapshot at a step index (the final step is always stored)."""
        if step_index == self.n_steps:
            return self.final_field
        if step_index % self.snapshot_stride != 0:
            raise IndexError(
                f"step {step_index} not stored (stride {self.snapshot_stride})"
            )
        return self.snapshots[step_index // self.snapshot_stride]

    @property
    def n_steps(self):
        return len(self.times) - 1


def evolve(f0, model, f_stat, window=None, dt=None, snapshot_stride=None):
    """Run the evolution over one window and record scalars per step.

    The per-step energy-balance defect |d(norm^2)/(2 dt) + D_total| is
    measured with the trapezoid average of D_total at the step endpoints.
    """
    g = model.grid
    if dt is None:
        dt = g.dt
    if window is None:
        window = g.window
    n_steps = int(round(window / dt))
    if abs(n_steps * dt - window) > 1e-9 * window:
        raise ValueError("window must be an integer multiple of dt")
    if snapshot_stride is None:
        snapshot_stride = 1 if g.n_x * g.n_v <= SNAPSHOT_CELL_LIMIT else 8

    times = np.arange(n_steps + 1) * dt
    mass = np.empty(n_steps + 1)
    norm_sq = np.empty(n_steps + 1)
    diss = np.empty(n_steps + 1)
    diss_tot = np.empty(n_steps + 1)
    defect = np.zeros(n_steps + 1)

    f = f0
    snapshots = [f0]
    mass[0] = f0.mass()
    norm_sq[0] = weighted_norm_sq(f0, f_stat)
    diss[0] = dissipation(f0, model, f_stat)
    diss_tot[0] = dissipation_total(f0, model, f_stat)
    for k in range(1, n_steps + 1):
        f = step(f, model, dt)
        mass[k] = f.mass()
        norm_sq[k] = weighted_norm_sq(f, f_stat)
        diss[k] = dissipation(f, model, f_stat)
        diss_tot[k] = dissipation_total(f, model, f_stat)
        defect[k] = abs(
            (norm_sq[k] - norm_sq[k - 1]) / (2.0 * dt)
            + 0.5 * (diss_tot[k] + diss_tot[k - 1])
        )
        if k % snapshot_stride == 0:
            snapshots.append(f)

    zero_mean = abs(mass[0]) <= 1e-12 * max(1.0, np.abs(f0.values).max())
    return Trajectory(
        grid=g,
        times=times,
        snapshots=snapshots,
        snapshot_stride=snapshot_stride,
        mass=mass,
        norm_sq=norm_sq,
        dissipation=diss,
        dissipation_total=diss_tot,
        balance_defect=defect,
        final_field=f,
        zero_mean=zero_mean,
    )


def trajectory_to_csv(path, traj, header_comment=None):
    """Per-step scalars: t, mass, norm_sq, dissipation, balance_defect."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("t,mass,norm_sq,dissipation,balance_defect\n")
        for k in range(len(traj.times)):
            fh.write(
                f"{traj.times[k]:.17g},{traj.mass[k]:.17g},"
                f"{traj.norm_sq[k]:.17g},{traj.dissipation[k]:.17g},"
                f"{traj.balance_defect[k]:.17g}\n"
            )
