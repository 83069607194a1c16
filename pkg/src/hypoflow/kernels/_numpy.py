"""Pure-numpy implementations of the hot kernels.

Reference semantics for the numba backend: both backends must agree to
round-off on identical inputs.  Array layout is (n_x, n_v) throughout,
row-major.  Velocity interfaces carry index k between cells k-1 and k,
so an interface array over v has n_v + 1 entries with the first and
last fixed to zero flux.
"""

import numpy as np


def transport_rhs(f, v, g_iface, dx, dv, order, wall_x):
    """Conservative upwind transport -v df/dx - d(G f)/dv.

    ``g_iface`` holds the force sampled at velocity interfaces, shape
    (n_x, n_v + 1); entries 0 and n_v are ignored (zero-flux walls).
    ``order`` 1 is donor-cell upwind, 2 adds an unlimited central
    (Fromm) slope on the upwind side.  ``wall_x`` switches the x
    boundary from periodic wrap to zero-flux walls.
    """
    n_x, n_v = f.shape
    out = np.zeros_like(f)

    pos = v > 0.0
    neg = ~pos

    # reconstruct the upwind-side interface states in x
    if order == 2:
        slope = 0.25 * (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0))
        if wall_x:
            slope[0, :] = 0.0
            slope[-1, :] = 0.0
    else:
        slope = None

    # flux_x[i, j] lives between cells i-1 and i (periodic wrap at i=0)
    flux_x = np.zeros((n_x + 1, n_v))
    fm = np.roll(f, 1, axis=0)
    if order == 2:
        recon_p = f + slope
        recon_m = f - slope
        flux_x[:n_x, pos] = (np.roll(recon_p, 1, axis=0) * v[None, :])[:, pos]
        flux_x[:n_x, neg] = (recon_m * v[None, :])[:, neg]
    else:
        flux_x[:n_x, pos] = (fm * v[None, :])[:, pos]
        flux_x[:n_x, neg] = (f * v[None, :])[:, neg]
    flux_x[n_x, :] = flux_x[0, :]
    if wall_x:
        flux_x[0, :] = 0.0
        flux_x[n_x, :] = 0.0
    out -= (flux_x[1:, :] - flux_x[:-1, :]) / dx

    # flux_v[i, k] lives between velocity cells k-1 and k, zero at walls
    flux_v = np.zeros((n_x, n_v + 1))
    g_in = g_iface[:, 1:n_v]
    gpos = g_in > 0.0
    if order == 2:
        slope_v = np.zeros_like(f)
        slope_v[:, 1:-1] = 0.25 * (f[:, 2:] - f[:, :-2])
        up = np.where(gpos, f[:, :-1] + slope_v[:, :-1], f[:, 1:] - slope_v[:, 1:])
    else:
        up = np.where(gpos, f[:, :-1], f[:, 1:])
    flux_v[:, 1:n_v] = g_in * up
    out -= (flux_v[:, 1:] - flux_v[:, :-1]) / dv
    return out


def fp_apply(f, background, m_iface, dv):
    """Velocity diffusion in flux form: d_v(M d_v(f/M)) with zero-flux walls.

    ``m_iface`` has shape (n_x, n_v - 1) with the interface diffusivities.
    The stencil annihilates ``background`` exactly.
    """
    u = f / background
    du = u[:, 1:] - u[:, :-1]
    flux = m_iface * du / dv
    out = np.zeros_like(f)
    out[:, :-1] += flux / dv
    out[:, 1:] -= flux / dv
    return out


def fp_adjoint_apply(h, f_stat, background, m_iface, dv):
    """Adjoint of fp_apply in the 1/f_stat-weighted inner product.

    Coincides with (f_stat/M) d_v(M d_v(h/f_stat)) on the same stencil.
    """
    u = h / f_stat
    du = u[:, 1:] - u[:, :-1]
    flux = m_iface * du / dv
    out = np.zeros_like(h)
    out[:, :-1] += flux / dv
    out[:, 1:] -= flux / dv
    return out * (f_stat / background)


def fp_cn_solve(f, background, m_iface, dv, dt):
    """Crank-Nicolson step of the velocity diffusion, per x-column.

    Solves (I - dt/2 L) f_new = (I + dt/2 L) f with L = fp_apply, using
    the Thomas algorithm vectorised across columns.
    """
    n_x, n_v = f.shape
    r = dt / (2.0 * dv * dv)
    # off-diagonal couplings c[k] between cells k and k+1: m_iface / M
    c_lo = m_iface / background[:, :-1]   # coefficient of f_k seen from k+1 side
    c_hi = m_iface / background[:, 1:]    # coefficient of f_{k+1} seen from k side

    # explicit half step rhs = (I + dt/2 L) f
    rhs = f + dt / 2.0 * fp_apply(f, background, m_iface, dv)

    # tridiagonal system: sub[j] f_{j-1} + diag[j] f_j + sup[j] f_{j+1}
    diag = np.ones_like(f)
    diag[:, :-1] += r * c_lo
    diag[:, 1:] += r * c_hi
    sub = np.zeros_like(f)
    sub[:, 1:] = -r * c_lo
    sup = np.zeros_like(f)
    sup[:, :-1] = -r * c_hi

    # Thomas sweep along v, vectorised over x
    cp = np.zeros_like(f)
    dp = np.zeros_like(f)
    cp[:, 0] = sup[:, 0] / diag[:, 0]
    dp[:, 0] = rhs[:, 0] / diag[:, 0]
    for j in range(1, n_v):
        denom = diag[:, j] - sub[:, j] * cp[:, j - 1]
        cp[:, j] = sup[:, j] / denom
        dp[:, j] = (rhs[:, j] - sub[:, j] * dp[:, j - 1]) / denom
    out = np.empty_like(f)
    out[:, -1] = dp[:, -1]
    for j in range(n_v - 2, -1, -1):
        out[:, j] = dp[:, j] - cp[:, j] * out[:, j + 1]
    return out


def bgk_apply(f, background, dv):
    """Relaxation collision <f> M - f."""
    rho = f.sum(axis=1) * dv
    return rho[:, None] * background - f


def bgk_adjoint_apply(h, background, f_stat, dv):
    """Adjoint of bgk_apply: f_stat <h M / f_stat> - h."""
    s = (h * background / f_stat).sum(axis=1) * dv
    return s[:, None] * f_stat - h


def bgk_relax(f, background, dv, dt):
    """Exact-in-time BGK update over dt."""
    rho = f.sum(axis=1) * dv
    decay = np.exp(-dt)
    return decay * f + (1.0 - decay) * rho[:, None] * background


def fp_dissipation_terms(f, f_stat, w_iface, dv):
    """Interface terms w * (d_v(f/f_stat))^2 of the velocity Dirichlet form."""
    u = f / f_stat
    du = (u[:, 1:] - u[:, :-1]) / dv
    return w_iface * du * du
