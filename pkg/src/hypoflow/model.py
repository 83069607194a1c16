"""Kinetic model: background, force, collision operators and the generator.

The generator acts as  A f = -v df/dx - d(G f)/dv + L f  with L either a
velocity diffusion in flux form ("fp") or a relaxation towards the local
background ("bgk").  Discrete adjoints are algebraic: A* is the transpose
of A in the 1/f_stat-weighted inner product, so adjointness and the
vanishing of the antisymmetric part in the dissipation hold to round-off
by construction.  The continuous adjoint formulas coincide with the
algebraic ones on these stencils (bgk exactly; fp because the flux form
is symmetric under the 1/M weighting).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import DimensionMismatch
from .grid import Grid, PhaseField

log = logging.getLogger(__name__)

KIND_FP = "fp"
KIND_BGK = "bgk"


def maxwellian_background(grid, temperature):
    """Gaussian velocity profile per column, renormalised to unit mass.

    temperature is an (n_x,) array of positive local variances.  The
    renormalisation makes sum_v M dv = 1 exact per column, which removes
    the bgk mass defect and keeps the collision operators conservative.
    """
    temperature = np.asarray(temperature, dtype=float)
    if temperature.shape != (grid.n_x,):
        raise DimensionMismatch("temperature profile must have shape (n_x,)")
    if np.any(temperature <= 0):
        raise ValueError("temperature must be positive")
    v = grid.v
    m = np.exp(-(v[None, :] ** 2) / (2.0 * temperature[:, None]))
    m /= np.sqrt(2.0 * np.pi * temperature[:, None])
    defect = np.abs(m.sum(axis=1) * grid.dv - 1.0).max()
    if defect > 1e-3:
        log.warning(
            "background column mass off by %.2e before renormalisation; "
            "v_max may be too small for this temperature range", defect,
        )
    m /= m.sum(axis=1, keepdims=True) * grid.dv
    return m


@dataclass
class KineticModel:
    """Immutable-by-convention bundle of background, force and grid.

    background: (n_x, n_v), column mass exactly 1 after construction
    force: (n_x, n_v) values of G at cell centres
    transport_order: 1 (donor-cell upwind) or 2 (unlimited Fromm slopes)
    """

    kind: str
    background: np.ndarray
    force: np.ndarray
    grid: Grid
    transport_order: int = 1
    m_iface: np.ndarray = field(init=False, repr=False)
    g_iface: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in (KIND_FP, KIND_BGK):
            raise ValueError(f"unknown collision kind {self.kind!r}")
        if self.transport_order not in (1, 2):
            raise ValueError("transport_order must be 1 or 2")
        shape = (self.grid.n_x, self.grid.n_v)
        if self.background.shape != shape or self.force.shape != shape:
            raise DimensionMismatch("background/force shape does not match grid")
        if not np.all(np.isfinite(self.force)):
            raise ValueError("force must be finite")
        ball = self.grid.ball_mask()
        if np.any(self.background[:, ball] <= 0):
            raise ValueError("background must be positive on |v| <= 1")
        # exact column renormalisation
        self.background = self.background / (
            self.background.sum(axis=1, keepdims=True) * self.grid.dv
        )
        m = self.background
        self.m_iface = 0.5 * (m[:, :-1] + m[:, 1:])
        g = np.zeros((self.grid.n_x, self.grid.n_v + 1))
        g[:, 1:-1] = 0.5 * (self.force[:, :-1] + self.force[:, 1:])
        self.g_iface = g

    def max_force(self):
        return float(np.abs(self.g_iface[:, 1:-1]).max()) if self.grid.n_v > 1 else 0.0


def _check_grid(f, model):
    if f.grid != model.grid:
        raise DimensionMismatch("field grid does not match model grid")


def collision_apply(f, model):
    """L f for the model's collision kind; conserves column mass."""
    _check_grid(f, model)
    g = model.grid
    if model.kind == KIND_FP:
        out = kernels.fp_apply(f.values, model.background, model.m_iface, g.dv)
    else:
        out = kernels.bgk_apply(f.values, model.background, g.dv)
    return PhaseField(out, g)


def collision_adjoint_apply(f, model, f_stat):
    """L* f, the adjoint of collision_apply in the f_stat-weighted product."""
    _check_grid(f, model)
    _check_grid(f_stat, model)
    g = model.grid
    if model.kind == KIND_FP:
        out = kernels.fp_adjoint_apply(
            f.values, f_stat.values, model.background, model.m_iface, g.dv
        )
    else:
        out = kernels.bgk_adjoint_apply(f.values, model.background, f_stat.values, g.dv)
    return PhaseField(out, g)


def transport_apply(f, model):
    """-v df/dx - d(G f)/dv with the model's transport order."""
    _check_grid(f, model)
    g = model.grid
    out = kernels.transport_rhs(
        f.values, g.v, model.g_iface, g.dx, g.dv, model.transport_order, g.wall_x
    )
    return PhaseField(out, g)


def generator_apply(f, model):
    """A f = transport + collision, matrix-free."""
    _check_grid(f, model)
    g = model.grid
    out = kernels.transport_rhs(
        f.values, g.v, model.g_iface, g.dx, g.dv, model.transport_order, g.wall_x
    )
    if model.kind == KIND_FP:
        out = out + kernels.fp_apply(f.values, model.background, model.m_iface, g.dv)
    else:
        out = out + kernels.bgk_apply(f.values, model.background, g.dv)
    return PhaseField(out, g)


DENSE_LIMIT = 10_000

_BASE_KINDS = ("generator", "collision", "transport")
_DERIVED_KINDS = (
    "adjoint",
    "symmetric",
    "antisymmetric",
    "collision_adjoint",
    "dissipation",
)


def _assemble_base(model, apply_fn):
    """Matrix of a linear cell operator, column by column from unit fields.

    Guarantees exact agreement with the matrix-free application at the
    cost of O(N^2) work; fine at the dense-assembly scales this is for.
    """
    g = model.grid
    n = g.n_x * g.n_v
    rows, cols, data = [], [], []
    e = np.zeros((g.n_x, g.n_v))
    for idx in range(n):
        e.flat[idx] = 1.0
        col = apply_fn(PhaseField(e, g), model).values.ravel()
        nz = np.flatnonzero(col)
        rows.append(nz)
        cols.append(np.full(nz.size, idx))
        data.append(col[nz])
        e.flat[idx] = 0.0
    return sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()


def weighted_transpose(mat, f_stat_values):
    """Adjoint of a matrix in the 1/f_stat-weighted inner product."""
    d = f_stat_values.ravel()
    return sp.diags(d) @ mat.T @ sp.diags(1.0 / d)


def assemble_generator(model, kind="generator", f_stat=None, dense=None):
    """Assemble the requested operator over the flattened (x, v) index.

    Kinds: generator (A), adjoint (A*), symmetric ((A+A*)/2),
    antisymmetric ((A-A*)/2), transport, collision (L),
    collision_adjoint (L*), and dissipation, the operator
    -1/2 diag(L f_stat / f_stat) + (L + L*)/2 whose weighted quadratic
    form is the collision dissipation exactly.

    Adjoint-bearing kinds need f_stat.  Returns dense ndarray when the
    flattened size is at most DENSE_LIMIT (or dense=True), else csr.
    """
    if kind not in _BASE_KINDS + _DERIVED_KINDS:
        raise ValueError(f"unknown operator kind {kind!r}")
    g = model.grid
    n = g.n_x * g.n_v
    if dense is None:
        dense = n <= DENSE_LIMIT
    if kind in ("generator", "adjoint", "symmetric", "antisymmetric"):
        base = _assemble_base(model, generator_apply)
    elif kind == "transport":
        base = _assemble_base(model, transport_apply)
    else:
        base = _assemble_base(model, collision_apply)

    if kind in ("generator", "collision", "transport"):
        out = base
    else:
        if f_stat is None:
            raise ValueError(f"kind {kind!r} requires f_stat")
        fs = f_stat.values
        adj = weighted_transpose(base, fs)
        if kind in ("adjoint", "collision_adjoint"):
            out = adj
        elif kind == "symmetric":
            out = (base + adj) * 0.5
        elif kind == "antisymmetric":
            out = (base - adj) * 0.5
        else:  # dissipation
            lf = collision_apply(f_stat, model).values
            out = sp.diags((-0.5 * lf / fs).ravel()) + (base + adj) * 0.5
    return out.toarray() if dense else sp.csr_matrix(out)


def fp_dissipation_weights(model, f_stat):
    """Interface weights of the velocity Dirichlet form for the fp kernel.

    m_iface times the interface mean of f_stat/M; with these weights the
    Dirichlet form equals the weighted quadratic form of the dissipation
    operator exactly.
    """
    phi = f_stat.values / model.background
    return model.m_iface * 0.5 * (phi[:, :-1] + phi[:, 1:])


def generator_symmetry_defect(model, f_stat, n_fields=4, seed=0):
    """Measured gap between the symmetric part of A and the dissipation
    operator, per unit field norm, on smooth random test fields.

    Exact only when f_stat is exactly stationary and the transport were
    centred; with upwind transport and a computed f_stat this is O(dx +
    dv) plus the stationarity residual, so it is reported (and checked
    to shrink under refinement), not asserted to vanish.
    """
    g = model.grid
    a_sym = assemble_generator(model, "symmetric", f_stat=f_stat, dense=True)
    a_diss = assemble_generator(model, "dissipation", f_stat=f_stat, dense=True)
    rng = np.random.default_rng(seed)
    worst = 0.0
    x, v = g.x, g.v
    wdiag = np.sqrt(g.cell_measure / f_stat.values.ravel())
    for _ in range(n_fields):
        a, b, c = rng.normal(size=3)
        smooth = (1 + 0.3 * np.sin(2 * np.pi * x[:, None] / g.length_x + a)) * (
            1 + 0.2 * np.cos(b + c * v[None, :] / g.v_max)
        )
        fv = (f_stat.values * smooth).ravel()
        diff = (a_sym - a_diss) @ fv
        worst = max(
            worst,
            np.linalg.norm(diff * wdiag) / np.linalg.norm(fv * wdiag),
        )
    return worst
