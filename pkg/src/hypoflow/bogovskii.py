"""Right inverse of the space-time divergence with weighted bounds.

Works on the slab [0, T] x (x-domain) discretised MAC-style: scalar
data g lives on cells, the time component of the vector field lives on
t-faces (zero at t = 0 and t = T), the space component on x-faces.

The construction follows the two-stage route: first solve the weighted
elliptic problem div(e^{-Phi} grad h) = g with zero flux at the time
boundary, giving the gradient field F0 = e^{-Phi} grad h which already
matches the divergence; then redistribute it with a partition of unity
into local fields with zero patch boundary values, each obtained from
an equality-constrained least-squares solve minimising the gradient
energy.  The sum has the same divergence, vanishes at the time
boundary exactly, and realises the weighted bounds whose measured
ratios are reported.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    CompatibilityViolation,
    HypoflowError,
    NoConvergence,
    PatchSingular,
    SpectralFailure,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Slab:
    """Space-time cell grid: n_t cells over [0, window], n_x cells in x."""

    n_t: int
    n_x: int
    dt: float
    dx: float
    wall_x: bool = False

    @property
    def cell_volume(self):
        return self.dt * self.dx

    @property
    def window(self):
        return self.n_t * self.dt


def _face_coeffs(slab, e_neg_phi):
    """Face diffusivities of div(e^{-Phi} grad .): zero-flux t-boundary."""
    e = np.asarray(e_neg_phi, dtype=float)
    a_t = np.zeros((slab.n_t + 1, slab.n_x))
    a_t[1:-1, :] = e[None, :]
    if slab.wall_x:
        a_x = np.zeros((slab.n_t, slab.n_x + 1))
        a_x[:, 1:-1] = 0.5 * (e[:-1] + e[1:])[None, :]
    else:
        a_x = np.empty((slab.n_t, slab.n_x))
        a_x[:, :] = (0.5 * (e + np.roll(e, 1)))[None, :]
    return a_t, a_x


def _apply_weighted_laplacian(h, a_t, a_x, slab):
    flux_t = np.zeros_like(a_t)
    flux_t[1:-1, :] = a_t[1:-1, :] * (h[1:, :] - h[:-1, :]) / slab.dt
    out = (flux_t[1:, :] - flux_t[:-1, :]) / slab.dt
    if slab.wall_x:
        flux_x = np.zeros_like(a_x)
        flux_x[:, 1:-1] = a_x[:, 1:-1] * (h[:, 1:] - h[:, :-1]) / slab.dx
        out += (flux_x[:, 1:] - flux_x[:, :-1]) / slab.dx
    else:
        flux_x = a_x * (h - np.roll(h, 1, axis=1)) / slab.dx
        out += (np.roll(flux_x, -1, axis=1) - flux_x) / slab.dx
    return out


def divergence(f0_faces, f1_faces, slab):
    """MAC divergence on cells of a face field pair."""
    out = (f0_faces[1:, :] - f0_faces[:-1, :]) / slab.dt
    if slab.wall_x:
        out = out + (f1_faces[:, 1:] - f1_faces[:, :-1]) / slab.dx
    else:
        out = out + (np.roll(f1_faces, -1, axis=1) - f1_faces) / slab.dx
    return out


def compatibility_defect(g, slab):
    """Relative size of the mean of g, which must vanish for solvability."""
    total = abs(float(g.sum()) * slab.cell_volume)
    scale = math.sqrt(float((g**2).sum()) * slab.cell_volume)
    scale *= math.sqrt(slab.n_t * slab.dt * slab.n_x * slab.dx)
    return total / scale if scale > 0 else 0.0


def weighted_poisson_solve(g, e_neg_phi, slab, tol=1e-10, maxiter=100_000):
    """Solve div(e^{-Phi} grad h) = g, zero-flux in t, sum h e^{-Phi} = 0.

    Jacobi-preconditioned conjugate gradients on the (singular,
    consistent) five-point system; iterates are kept mean-free.
    Returns (h, f0_faces, f1_faces, info).
    """
    g = np.asarray(g, dtype=float)
    if g.shape != (slab.n_t, slab.n_x):
        raise ValueError("g must have shape (n_t, n_x)")
    defect = compatibility_defect(g, slab)
    if defect > 1e-10:
        raise CompatibilityViolation(
            f"right-hand side has mean defect {defect:.3e} > 1e-10"
        )
    a_t, a_x = _face_coeffs(slab, e_neg_phi)

    def op(h):  # SPD version: -div(a grad h)
        return -_apply_weighted_laplacian(h, a_t, a_x, slab)

    diag = (a_t[1:, :] + a_t[:-1, :]) / slab.dt**2
    if slab.wall_x:
        diag = diag + (a_x[:, 1:] + a_x[:, :-1]) / slab.dx**2
    else:
        diag = diag + (a_x + np.roll(a_x, -1, axis=1)) / slab.dx**2
    inv_diag = 1.0 / np.maximum(diag, 1e-300)

    b = -(g - g.mean())
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        h = np.zeros_like(g)
        return h, a_t * 0.0, a_x * 0.0, {"iterations": 0, "rel_residual": 0.0}

    h = np.zeros_like(b)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float((r * z).sum())
    info = {}
    for it in range(1, maxiter + 1):
        q = op(p)
        alpha = rz / float((p * q).sum())
        h += alpha * p
        r -= alpha * q
        h -= h.mean()
        rel = np.linalg.norm(r) / bnorm
        if rel <= tol:
            info = {"iterations": it, "rel_residual": rel}
            break
        z = inv_diag * r
        rz_new = float((r * z).sum())
        p = z + (rz_new / rz) * p
        rz = rz_new
    else:
        raise NoConvergence(
            f"poisson CG stalled at rel residual {np.linalg.norm(r)/bnorm:.3e} "
            f"after {maxiter} iterations"
        )

    e = np.asarray(e_neg_phi, dtype=float)
    h -= float((h * e[None, :]).sum() / (slab.n_t * e.sum()))
    f0 = np.zeros_like(a_t)
    f0[1:-1, :] = a_t[1:-1, :] * (h[1:, :] - h[:-1, :]) / slab.dt
    if slab.wall_x:
        f1 = np.zeros_like(a_x)
        f1[:, 1:-1] = a_x[:, 1:-1] * (h[:, 1:] - h[:, :-1]) / slab.dx
    else:
        f1 = a_x * (h - np.roll(h, 1, axis=1)) / slab.dx
    return h, f0, f1, info


# --- partition of unity -------------------------------------------------


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def _bump_profile(coords, start, extent, clip_lo, clip_hi):
    """C^2 tent over [start, start+extent]: smooth rise, plateau, fall.

    clip_lo/clip_hi flatten the corresponding half (for patches touching
    the slab boundary, where the cover must stay 1 up to the edge).
    """
    xi = (coords - start) / extent
    inside = (xi >= 0.0) & (xi <= 1.0)
    rise = _smoothstep(2.0 * xi)
    fall = _smoothstep(2.0 * (1.0 - xi))
    prof = np.where(xi <= 0.5, rise, fall)
    if clip_lo:
        prof = np.where((xi >= 0.0) & (xi <= 0.5), 1.0, prof)
    if clip_hi:
        prof = np.where((xi > 0.5) & (xi <= 1.0), 1.0, prof)
    return np.where(inside, prof, 0.0)


def _wrap_coords(coords, start, length):
    return np.mod(coords - start, length) + start


@dataclass
class Patch:
    t0: int
    t1: int
    x0: int
    x1: int
    # 1D profiles sampled on the global coordinate lattices
    bump_t_nodes: np.ndarray = field(repr=False, default=None)
    bump_t_cells: np.ndarray = field(repr=False, default=None)
    bump_x_cells: np.ndarray = field(repr=False, default=None)
    bump_x_faces: np.ndarray = field(repr=False, default=None)

    @property
    def n_t(self):
        return self.t1 - self.t0

    @property
    def n_x(self):
        return self.x1 - self.x0


@dataclass
class PartitionOfUnity:
    """Overlapping smooth cover of the slab with normalised weights."""

    slab: Slab
    patches: list
    # normalisation denominators on each sample lattice
    norm_t_nodes_x_cells: np.ndarray = field(repr=False, default=None)
    norm_t_cells_x_faces: np.ndarray = field(repr=False, default=None)
    norm_cells: np.ndarray = field(repr=False, default=None)

    def theta_on_f0_faces(self, patch):
        raw = np.outer(patch.bump_t_nodes, patch.bump_x_cells)
        return raw / self.norm_t_nodes_x_cells

    def theta_on_f1_faces(self, patch):
        raw = np.outer(patch.bump_t_cells, patch.bump_x_faces)
        return raw / self.norm_t_cells_x_faces

    def theta_on_cells(self, patch):
        raw = np.outer(patch.bump_t_cells, patch.bump_x_cells)
        return raw / self.norm_cells


def _axis_starts(n_cells, width, stride, periodic):
    if periodic:
        starts = list(range(0, n_cells, stride))
    else:
        starts = list(range(0, max(n_cells - width, 0) + 1, stride))
        if starts[-1] != n_cells - width:
            starts.append(n_cells - width)
    return starts


def _pick_width(target_cells, n_cells, minimum=4, maximum=32, allow_full=False):
    """Smallest power of two >= target (clamped), dividing n_cells.

    Rounding up keeps the normalised bump slopes, which scale like
    1/width, inside the partition gradient bound.  Bounded axes may use
    the full axis as a single flat patch when the target exceeds it.
    """
    cap = n_cells if allow_full else n_cells // 2
    width = minimum
    while width < min(target_cells, maximum, cap) and n_cells % (width * 2) == 0:
        width *= 2
    while n_cells % width != 0 and width > 2:
        width //= 2
    return min(width, n_cells)


def build_partition(slab, grad_phi_x, max_width=32):
    """Cover the slab with half-overlapping smooth patches.

    Patch extents aim at 0.75 of the largest local scale
    (1 + |grad Phi|^2)^(-1/2); sizing by the largest scale keeps the
    normalised bump slopes below 8 (1 + |grad Phi|^2)^(1/2) everywhere,
    since the bound is tightest exactly where the scale is largest.  The
    factor-4 diameter comparability and the cellwise gradient bound are
    verified after construction.
    """
    gp = np.asarray(grad_phi_x, dtype=float)
    scale = 1.0 / np.sqrt(1.0 + gp**2)
    delta_max = float(scale.max())

    width_t = _pick_width(
        max(4, math.ceil(0.75 * delta_max / slab.dt)),
        slab.n_t,
        maximum=max_width,
        allow_full=True,
    )
    width_x = _pick_width(
        max(4, math.ceil(0.75 * delta_max / slab.dx)),
        slab.n_x,
        maximum=max_width,
        allow_full=slab.wall_x,
    )
    if width_t <= 2 or width_x <= 2:
        raise PatchSingular(
            f"patch width {width_t}x{width_x} cells is too small for local solves"
        )
    stride_t, stride_x = max(1, width_t // 2), max(1, width_x // 2)

    t_nodes = np.arange(slab.n_t + 1) * slab.dt
    t_cells = (np.arange(slab.n_t) + 0.5) * slab.dt
    if slab.wall_x:
        x_faces = np.arange(slab.n_x + 1) * slab.dx
    else:
        x_faces = np.arange(slab.n_x) * slab.dx
    x_cells = (np.arange(slab.n_x) + 0.5) * slab.dx
    length_x = slab.n_x * slab.dx

    patches = []
    for t0 in _axis_starts(slab.n_t, width_t, stride_t, periodic=False):
        t1 = t0 + width_t
        start_t, ext_t = t0 * slab.dt, width_t * slab.dt
        bt_nodes = _bump_profile(t_nodes, start_t, ext_t, t0 == 0, t1 == slab.n_t)
        bt_cells = _bump_profile(t_cells, start_t, ext_t, t0 == 0, t1 == slab.n_t)
        for x0 in _axis_starts(slab.n_x, width_x, stride_x, periodic=not slab.wall_x):
            x1 = x0 + width_x
            start_x, ext_x = x0 * slab.dx, width_x * slab.dx
            if slab.wall_x:
                bx_cells = _bump_profile(x_cells, start_x, ext_x, x0 == 0, x1 == slab.n_x)
                bx_faces = _bump_profile(x_faces, start_x, ext_x, x0 == 0, x1 == slab.n_x)
            else:
                bx_cells = _bump_profile(
                    _wrap_coords(x_cells, start_x, length_x), start_x, ext_x, False, False
                )
                bx_faces = _bump_profile(
                    _wrap_coords(x_faces, start_x, length_x), start_x, ext_x, False, False
                )
            patches.append(
                Patch(t0, t1, x0, x1, bt_nodes, bt_cells, bx_cells, bx_faces)
            )

    pou = PartitionOfUnity(slab=slab, patches=patches)
    pou.norm_t_nodes_x_cells = sum(
        np.outer(p.bump_t_nodes, p.bump_x_cells) for p in patches
    )
    pou.norm_t_cells_x_faces = sum(
        np.outer(p.bump_t_cells, p.bump_x_faces) for p in patches
    )
    pou.norm_cells = sum(np.outer(p.bump_t_cells, p.bump_x_cells) for p in patches)
    for arr in (pou.norm_t_nodes_x_cells, pou.norm_t_cells_x_faces, pou.norm_cells):
        if arr.min() <= 0.0:
            raise HypoflowError("partition cover leaves the slab exposed")
    _validate_partition(pou, scale)
    return pou


def _validate_partition(pou, scale_x):
    """Diameter comparability (factor 4) and the cellwise gradient bound."""
    slab = pou.slab
    for p in pou.patches:
        diam = math.hypot(p.n_t * slab.dt, p.n_x * slab.dx)
        if slab.wall_x:
            local = scale_x[p.x0 : p.x1]
        else:
            local = scale_x[np.arange(p.x0, p.x1) % slab.n_x]
        if diam > 4.0 * local.max() or diam < local.min() / 4.0:
            raise HypoflowError(
                f"patch diameter {diam:.3g} not within factor 4 of local scale "
                f"[{local.min():.3g}, {local.max():.3g}]"
            )
    bound = 8.0 / scale_x  # = 8 (1 + |grad Phi|^2)^(1/2), per x-cell
    for p in pou.patches:
        theta = pou.theta_on_cells(p)
        grad_t = np.gradient(theta, slab.dt, axis=0, edge_order=1)
        grad_x = np.gradient(theta, slab.dx, axis=1, edge_order=1)
        mag = np.hypot(grad_t, grad_x).max(axis=0)
        if np.any(mag > bound):
            worst = float((mag / bound).max())
            raise HypoflowError(
                f"partition gradient exceeds 8 (1+|grad Phi|^2)^(1/2) by factor "
                f"{worst:.3g}"
            )
    return True


# --- local constrained solves -------------------------------------------


class _LocalPatchSolver:
    """Minimum-gradient fields on a patch with prescribed divergence.

    Unknowns are the faces strictly inside the patch (boundary faces are
    zero, matching the zero extension); the divergence constraint on
    every patch cell is enforced exactly through a KKT system whose
    Schur complement has the constants as its only null vector, removed
    by an exact rank-one deflation.  All patches of one shape share the
    same system, so the factorisations are built once and reused.
    """

    def __init__(self, p_t, p_x, dt, dx):
        import scipy.linalg as sla

        if p_t <= 2 or p_x <= 2:
            raise PatchSingular(f"patch of {p_t}x{p_x} cells is too small")
        self.p_t, self.p_x = p_t, p_x
        n0 = (p_t - 1) * p_x
        n1 = p_t * (p_x - 1)
        n_u = n0 + n1
        n_c = p_t * p_x
        self.n0 = n0

        def idx0(node_minus1, i):  # F0 unknown at interior node (1..p_t-1)
            return node_minus1 * p_x + i

        def idx1(n, face_minus1):  # F1 unknown at interior face (1..p_x-1)
            return n0 + n * (p_x - 1) + face_minus1

        cmat = np.zeros((n_c, n_u))
        for n in range(p_t):
            for i in range(p_x):
                row = n * p_x + i
                if n + 1 <= p_t - 1:
                    cmat[row, idx0(n, i)] += 1.0 / dt
                if n >= 1:
                    cmat[row, idx0(n - 1, i)] -= 1.0 / dt
                if i + 1 <= p_x - 1:
                    cmat[row, idx1(n, i)] += 1.0 / dx
                if i >= 1:
                    cmat[row, idx1(n, i - 1)] -= 1.0 / dx

        q = np.zeros((n_u, n_u))

        def add_pair(a, b, scale):
            s2 = scale * scale
            if a is not None:
                q[a, a] += s2
            if b is not None:
                q[b, b] += s2
            if a is not None and b is not None:
                q[a, b] -= s2
                q[b, a] -= s2

        # F0 lattice: nodes 0..p_t (zero at 0, p_t), cells 0..p_x-1 + x-ghosts
        for i in range(p_x):
            for k in range(p_t):
                a = idx0(k - 1, i) if k >= 1 else None
                b = idx0(k, i) if k + 1 <= p_t - 1 else None
                add_pair(a, b, 1.0 / dt)
        for k in range(1, p_t):
            for i in range(-1, p_x):
                a = idx0(k - 1, i) if i >= 0 else None
                b = idx0(k - 1, i + 1) if i + 1 <= p_x - 1 else None
                add_pair(a, b, 1.0 / dx)
        # F1 lattice: faces 0..p_x (zero at 0, p_x), t-cells 0..p_t-1 + t-ghosts
        for n in range(p_t):
            for j in range(p_x):
                a = idx1(n, j - 1) if j >= 1 else None
                b = idx1(n, j) if j + 1 <= p_x - 1 else None
                add_pair(a, b, 1.0 / dx)
        for j in range(1, p_x):
            for n in range(-1, p_t):
                a = idx1(n, j - 1) if n >= 0 else None
                b = idx1(n + 1, j - 1) if n + 1 <= p_t - 1 else None
                add_pair(a, b, 1.0 / dt)

        self.cmat = cmat
        try:
            cho_q = sla.cho_factor(q)
        except np.linalg.LinAlgError as exc:
            raise PatchSingular(f"gradient energy singular on patch: {exc}") from exc
        self.y = sla.cho_solve(cho_q, cmat.T)  # Q^{-1} C^T
        schur = cmat @ self.y
        # deflate the constant null vector; C^T 1 = 0 keeps u unaffected
        alpha = np.trace(schur) / n_c
        schur = schur + alpha / n_c
        self.cho_schur = sla.cho_factor(schur)
        self._sla = sla

    def solve(self, g_k):
        g_vec = g_k.ravel()
        mu = self._sla.cho_solve(self.cho_schur, g_vec)
        u = self.y @ mu
        resid = np.linalg.norm(self.cmat @ u - g_vec)
        scale = max(np.linalg.norm(g_vec), 1e-300)
        if resid > 1e-9 * scale:
            raise PatchSingular(
                f"local divergence constraint unsatisfied: {resid/scale:.3e}"
            )
        f0_loc = u[: self.n0].reshape(self.p_t - 1, self.p_x)
        f1_loc = u[self.n0 :].reshape(self.p_t, self.p_x - 1)
        return f0_loc, f1_loc


def _local_solve(patch, g_k, slab, _cache={}):
    key = (patch.n_t, patch.n_x, slab.dt, slab.dx)
    solver = _cache.get(key)
    if solver is None:
        solver = _LocalPatchSolver(patch.n_t, patch.n_x, slab.dt, slab.dx)
        if len(_cache) > 16:
            _cache.clear()
        _cache[key] = solver
    return solver.solve(g_k)


@dataclass
class BogovskiiResult:
    """Constructed field, exact-divergence diagnostics and measured ratios."""

    f0_faces: np.ndarray
    f1_faces: np.ndarray
    divergence_residual: float
    boundary_max: float
    ratio: float          # hypothesis form: [|F|^2 w + |grad F|^2] / rho vs g^2 / rho
    ratio_weak: float     # same with (1 + |x|^2)^ell on the right
    lemma_field_ratio: float
    lemma_gradient_ratio: float
    patch_count: int
    poisson_info: dict
    applicable: bool = True

    def field_at_cells(self, slab):
        f0c = 0.5 * (self.f0_faces[1:, :] + self.f0_faces[:-1, :])
        if slab.wall_x:
            f1c = 0.5 * (self.f1_faces[:, 1:] + self.f1_faces[:, :-1])
        else:
            f1c = 0.5 * (self.f1_faces + np.roll(self.f1_faces, -1, axis=1))
        return f0c, f1c

    def gradients_at_cells(self, slab):
        """d_t F0 and d_x F1 exact from faces; cross terms by averaging."""
        d_t_f0 = (self.f0_faces[1:, :] - self.f0_faces[:-1, :]) / slab.dt
        if slab.wall_x:
            d_x_f1 = (self.f1_faces[:, 1:] - self.f1_faces[:, :-1]) / slab.dx
        else:
            d_x_f1 = (np.roll(self.f1_faces, -1, axis=1) - self.f1_faces) / slab.dx
        f0c, f1c = self.field_at_cells(slab)
        if slab.wall_x:
            d_x_f0 = np.gradient(f0c, slab.dx, axis=1, edge_order=2)
        else:
            d_x_f0 = (np.roll(f0c, -1, axis=1) - np.roll(f0c, 1, axis=1)) / (2 * slab.dx)
        d_t_f1 = np.gradient(f1c, slab.dt, axis=0, edge_order=2)
        return d_t_f0, d_x_f0, d_t_f1, d_x_f1


def bogovskii_solve(
    g,
    slab,
    density_x,
    weight_x,
    weak_ell=None,
    x_coords=None,
    tol=1e-10,
    max_patch_width=32,
):
    """Solve div F = g on the slab with F = 0 at t in {0, T} exactly.

    The elliptic stage uses e^{-Phi} = density / weight (so that the
    measured bounds reproduce the hypothesis form with W = weight); the
    partition stage restores the gradient bound by local solves.  When
    weak_ell is given the right-hand side of the weak bound carries the
    moment weight (1 + |x|^2)^ell evaluated at x_coords.
    """
    g = np.asarray(g, dtype=float)
    density_x = np.asarray(density_x, dtype=float)
    weight_x = np.asarray(weight_x, dtype=float)
    vol = slab.cell_volume

    if float(np.abs(g).max(initial=0.0)) == 0.0:
        zero0 = np.zeros((slab.n_t + 1, slab.n_x))
        zero1 = np.zeros(
            (slab.n_t, slab.n_x + 1 if slab.wall_x else slab.n_x)
        )
        return BogovskiiResult(
            f0_faces=zero0,
            f1_faces=zero1,
            divergence_residual=0.0,
            boundary_max=0.0,
            ratio=float("nan"),
            ratio_weak=float("nan"),
            lemma_field_ratio=float("nan"),
            lemma_gradient_ratio=float("nan"),
            patch_count=0,
            poisson_info={"iterations": 0, "rel_residual": 0.0},
            applicable=False,
        )

    e_neg_phi = density_x / weight_x
    h, f0_pot, f1_pot, info = weighted_poisson_solve(g, e_neg_phi, slab, tol=tol)

    phi = np.log(weight_x / density_x)
    from .grid import d_dx

    grad_phi = d_dx(phi, slab.dx, slab.wall_x)
    pou = build_partition(slab, grad_phi, max_width=max_patch_width)

    f0 = np.zeros_like(f0_pot)
    f1 = np.zeros_like(f1_pot)
    for patch in pou.patches:
        th0 = pou.theta_on_f0_faces(patch)
        th1 = pou.theta_on_f1_faces(patch)
        g_full = divergence(th0 * f0_pot, th1 * f1_pot, slab)
        t_sl = slice(patch.t0, patch.t1)
        if slab.wall_x:
            cols = np.arange(patch.x0, patch.x1)
        else:
            cols = np.arange(patch.x0, patch.x1) % slab.n_x
        g_k = g_full[t_sl, :][:, cols]
        f0_loc, f1_loc = _local_solve(patch, g_k, slab)
        rows0 = np.arange(patch.t0 + 1, patch.t1)
        f0[rows0[:, None], cols[None, :]] += f0_loc
        if slab.wall_x:
            faces = np.arange(patch.x0 + 1, patch.x1)
        else:
            faces = np.arange(patch.x0 + 1, patch.x1) % slab.n_x
        rows1 = np.arange(patch.t0, patch.t1)
        f1[rows1[:, None], faces[None, :]] += f1_loc

    div = divergence(f0, f1, slab)
    g_norm = math.sqrt(float((g * g).sum()) * vol)
    div_residual = math.sqrt(float(((div - g) ** 2).sum()) * vol) / g_norm
    boundary_max = float(
        max(np.abs(f0[0, :]).max(), np.abs(f0[-1, :]).max())
    )

    result = BogovskiiResult(
        f0_faces=f0,
        f1_faces=f1,
        divergence_residual=div_residual,
        boundary_max=boundary_max,
        ratio=0.0,
        ratio_weak=float("nan"),
        lemma_field_ratio=0.0,
        lemma_gradient_ratio=0.0,
        patch_count=len(pou.patches),
        poisson_info=info,
    )

    f0c, f1c = result.field_at_cells(slab)
    gt0, gx0, gt1, gx1 = result.gradients_at_cells(slab)
    rho = density_x[None, :]
    w = weight_x[None, :]
    field_sq = f0c**2 + f1c**2
    grad_sq = gt0**2 + gx0**2 + gt1**2 + gx1**2
    den = float((g * g / rho).sum()) * vol
    num = float(((field_sq * w + grad_sq) / rho).sum()) * vol
    result.ratio = num / den

    e_phi = (w / rho)
    one_plus = 1.0 + grad_phi[None, :] ** 2
    lemma_field = float((field_sq * e_phi).sum()) / float((g * g * e_phi / w).sum())
    lemma_grad = float((grad_sq * e_phi / one_plus).sum()) / float(
        (g * g * (1.0 / w + 1.0 / one_plus) * e_phi).sum()
    )
    result.lemma_field_ratio = lemma_field
    result.lemma_gradient_ratio = lemma_grad

    if weak_ell is not None:
        if x_coords is None:
            raise ValueError("weak bound needs x_coords")
        moment = (1.0 + np.asarray(x_coords)[None, :] ** 2) ** weak_ell
        den_weak = float((g * g * moment / rho).sum()) * vol
        result.ratio_weak = num / den_weak
    return result


def poincare_constant(slab, e_neg_phi, w_cells, tol=1e-8, maxiter=3000, seed=7):
    """Inverse of the smallest constrained eigenvalue of the weighted pair
    (grad form with e^{-Phi}, mass form with W e^{-Phi}).

    The minimisation runs over fields with sum h e^{-Phi} = 0, enforced
    as an explicit LOBPCG constraint.
    """
    e = np.asarray(e_neg_phi, dtype=float)
    if e.ndim == 1:
        e_cells = np.broadcast_to(e[None, :], (slab.n_t, slab.n_x)).copy()
    else:
        e_cells = e
    w = np.asarray(w_cells, dtype=float)
    if w.ndim == 0:
        w = np.full((slab.n_t, slab.n_x), float(w))
    elif w.ndim == 1:
        w = np.broadcast_to(w[None, :], (slab.n_t, slab.n_x)).copy()

    n = slab.n_t * slab.n_x
    vol = slab.cell_volume

    def cell_index(t, x):
        return t * slab.n_x + x

    rows, cols, vals = [], [], []

    def add_face(r, s, coeff):
        rows.extend((r, s, r, s))
        cols.extend((r, s, s, r))
        vals.extend((coeff, coeff, -coeff, -coeff))

    tt, xx = np.meshgrid(np.arange(1, slab.n_t), np.arange(slab.n_x), indexing="ij")
    a = (0.5 * (e_cells[tt - 1, xx] + e_cells[tt, xx]) / slab.dt**2 * vol).ravel()
    r_idx = cell_index(tt - 1, xx).ravel()
    s_idx = cell_index(tt, xx).ravel()
    for r, s, c in zip(r_idx, s_idx, a):
        add_face(r, s, c)

    if slab.wall_x:
        tt, xx = np.meshgrid(np.arange(slab.n_t), np.arange(1, slab.n_x), indexing="ij")
        a = (0.5 * (e_cells[tt, xx - 1] + e_cells[tt, xx]) / slab.dx**2 * vol).ravel()
        r_idx = cell_index(tt, xx - 1).ravel()
        s_idx = cell_index(tt, xx).ravel()
    else:
        tt, xx = np.meshgrid(np.arange(slab.n_t), np.arange(slab.n_x), indexing="ij")
        xprev = (xx - 1) % slab.n_x
        a = (0.5 * (e_cells[tt, xprev] + e_cells[tt, xx]) / slab.dx**2 * vol).ravel()
        r_idx = cell_index(tt, xprev).ravel()
        s_idx = cell_index(tt, xx).ravel()
    for r, s, c in zip(r_idx, s_idx, a):
        add_face(r, s, c)

    stiff = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    mass = sp.diags((w * e_cells).ravel() * vol)
    constraint = e_cells.ravel() * vol

    # inverse iteration on the pencil restricted to the constraint plane,
    # through the bordered system [[S + sigma B, c], [c^T, 0]]: a single
    # sparse factorisation, deterministic, and the multiplier keeps the
    # constraint satisfied exactly at every step
    rng = np.random.default_rng(seed)
    sigma = 1e-3 * float(stiff.diagonal().mean() / mass.diagonal().mean())
    bordered = sp.bmat(
        [[stiff + sigma * mass, constraint[:, None]], [constraint[None, :], None]],
        format="csc",
    )
    try:
        lu = spla.splu(bordered)
    except RuntimeError as exc:
        raise SpectralFailure(f"bordered factorisation failed: {exc}") from exc
    vec = rng.normal(size=n)
    vec -= constraint * (constraint @ vec) / (constraint @ constraint)
    lam = np.inf
    rhs = np.empty(n + 1)
    rel_resid = np.inf
    for _ in range(maxiter):
        rhs[:n] = mass @ vec
        rhs[n] = 0.0
        sol = lu.solve(rhs)
        vec = sol[:n]
        vec /= np.linalg.norm(vec)
        sv = stiff @ vec
        bv = mass @ vec
        lam = float((vec @ sv) / (vec @ bv))
        # constrained stationarity: S v = lam B v + nu c; the residual is
        # judged with the multiplier direction removed
        r = sv - lam * bv
        r = r - constraint * (constraint @ r) / (constraint @ constraint)
        rel_resid = np.linalg.norm(r) / max(np.linalg.norm(bv) * abs(lam), 1e-300)
        if rel_resid <= tol:
            break
    if not np.isfinite(lam) or lam <= 0:
        raise SpectralFailure(f"nonpositive smallest eigenvalue {lam}")
    if rel_resid > 1e-6:
        raise SpectralFailure(f"eigenpair residual {rel_resid:.3e} above tolerance")
    return 1.0 / lam
