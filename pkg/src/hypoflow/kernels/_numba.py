"""Numba-jitted implementations of the hot kernels.

Loop versions of kernels/_numpy.py with identical arithmetic per cell.
All kernels are serial njit (no prange) so a given input maps to one
bit pattern regardless of thread count.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def transport_rhs(f, v, g_iface, dx, dv, order, wall_x):
    n_x, n_v = f.shape
    out = np.zeros_like(f)

    flux_x = np.zeros((n_x + 1, n_v))
    for j in range(n_v):
        vj = v[j]
        if vj > 0.0:
            for i in range(n_x):
                iu = i - 1 if i > 0 else n_x - 1
                val = f[iu, j]
                if order == 2:
                    il = iu - 1 if iu > 0 else n_x - 1
                    ir = iu + 1 if iu < n_x - 1 else 0
                    if not (wall_x and (iu == 0 or iu == n_x - 1)):
                        val = val + 0.25 * (f[ir, j] - f[il, j])
                flux_x[i, j] = vj * val
        else:
            for i in range(n_x):
                val = f[i, j]
                if order == 2:
                    il = i - 1 if i > 0 else n_x - 1
                    ir = i + 1 if i < n_x - 1 else 0
                    if not (wall_x and (i == 0 or i == n_x - 1)):
                        val = val - 0.25 * (f[ir, j] - f[il, j])
                flux_x[i, j] = vj * val
        flux_x[n_x, j] = flux_x[0, j]
        if wall_x:
            flux_x[0, j] = 0.0
            flux_x[n_x, j] = 0.0
    for i in range(n_x):
        for j in range(n_v):
            out[i, j] -= (flux_x[i + 1, j] - flux_x[i, j]) / dx

    flux_v = np.zeros((n_x, n_v + 1))
    for i in range(n_x):
        for k in range(1, n_v):
            g = g_iface[i, k]
            if g > 0.0:
                val = f[i, k - 1]
                if order == 2 and 1 <= k - 1 <= n_v - 2:
                    val = val + 0.25 * (f[i, k] - f[i, k - 2])
            else:
                val = f[i, k]
                if order == 2 and 1 <= k <= n_v - 2:
                    val = val - 0.25 * (f[i, k + 1] - f[i, k - 1])
            flux_v[i, k] = g * val
        for j in range(n_v):
            out[i, j] -= (flux_v[i, j + 1] - flux_v[i, j]) / dv
    return out


@njit(cache=True)
def fp_apply(f, background, m_iface, dv):
    n_x, n_v = f.shape
    out = np.zeros_like(f)
    for i in range(n_x):
        prev = 0.0
        for k in range(n_v - 1):
            du = f[i, k + 1] / background[i, k + 1] - f[i, k] / background[i, k]
            flux = m_iface[i, k] * du / dv
            out[i, k] = (flux - prev) / dv
            prev = flux
        out[i, n_v - 1] = (0.0 - prev) / dv
    return out


@njit(cache=True)
def fp_adjoint_apply(h, f_stat, background, m_iface, dv):
    n_x, n_v = h.shape
    out = np.zeros_like(h)
    for i in range(n_x):
        prev = 0.0
        for k in range(n_v - 1):
            du = h[i, k + 1] / f_stat[i, k + 1] - h[i, k] / f_stat[i, k]
            flux = m_iface[i, k] * du / dv
            out[i, k] = (flux - prev) / dv
            prev = flux
        out[i, n_v - 1] = (0.0 - prev) / dv
        for k in range(n_v):
            out[i, k] = out[i, k] * (f_stat[i, k] / background[i, k])
    return out


@njit(cache=True)
def fp_cn_solve(f, background, m_iface, dv, dt):
    n_x, n_v = f.shape
    r = dt / (2.0 * dv * dv)
    out = np.empty_like(f)
    cp = np.empty(n_v)
    dp = np.empty(n_v)
    for i in range(n_x):
        # rhs = (I + dt/2 L) f for this column
        rhs = np.empty(n_v)
        prev = 0.0
        for k in range(n_v - 1):
            du = f[i, k + 1] / background[i, k + 1] - f[i, k] / background[i, k]
            flux = m_iface[i, k] * du / dv
            rhs[k] = f[i, k] + dt / 2.0 * (flux - prev) / dv
            prev = flux
        rhs[n_v - 1] = f[i, n_v - 1] + dt / 2.0 * (0.0 - prev) / dv

        # tridiagonal coefficients of (I - dt/2 L)
        # sub[j] couples to j-1, sup[j] couples to j+1
        # Thomas forward sweep
        c_hi0 = m_iface[i, 0] / background[i, 1]
        diag0 = 1.0 + r * (m_iface[i, 0] / background[i, 0])
        cp[0] = (-r * c_hi0) / diag0
        dp[0] = rhs[0] / diag0
        for j in range(1, n_v):
            c_lo = m_iface[i, j - 1] / background[i, j - 1]
            dj = 1.0 + r * (m_iface[i, j - 1] / background[i, j])
            if j < n_v - 1:
                dj += r * (m_iface[i, j] / background[i, j])
                sup_j = -r * (m_iface[i, j] / background[i, j + 1])
            else:
                sup_j = 0.0
            sub_j = -r * c_lo
            denom = dj - sub_j * cp[j - 1]
            cp[j] = sup_j / denom
            dp[j] = (rhs[j] - sub_j * dp[j - 1]) / denom
        out[i, n_v - 1] = dp[n_v - 1]
        for j in range(n_v - 2, -1, -1):
            out[i, j] = dp[j] - cp[j] * out[i, j + 1]
    return out


@njit(cache=True)
def bgk_apply(f, background, dv):
    n_x, n_v = f.shape
    out = np.empty_like(f)
    for i in range(n_x):
        rho = 0.0
        for j in range(n_v):
            rho += f[i, j]
        rho *= dv
        for j in range(n_v):
            out[i, j] = rho * background[i, j] - f[i, j]
    return out


@njit(cache=True)
def bgk_adjoint_apply(h, background, f_stat, dv):
    n_x, n_v = h.shape
    out = np.empty_like(h)
    for i in range(n_x):
        s = 0.0
        for j in range(n_v):
            s += h[i, j] * background[i, j] / f_stat[i, j]
        s *= dv
        for j in range(n_v):
            out[i, j] = s * f_stat[i, j] - h[i, j]
    return out


@njit(cache=True)
def bgk_relax(f, background, dv, dt):
    n_x, n_v = f.shape
    out = np.empty_like(f)
    decay = np.exp(-dt)
    grow = 1.0 - decay
    for i in range(n_x):
        rho = 0.0
        for j in range(n_v):
            rho += f[i, j]
        rho *= dv
        for j in range(n_v):
            out[i, j] = decay * f[i, j] + grow * rho * background[i, j]
    return out


@njit(cache=True)
def fp_dissipation_terms(f, f_stat, w_iface, dv):
    n_x, n_v = f.shape
    out = np.empty((n_x, n_v - 1))
    for i in range(n_x):
        for k in range(n_v - 1):
            du = (f[i, k + 1] / f_stat[i, k + 1] - f[i, k] / f_stat[i, k]) / dv
            out[i, k] = w_iface[i, k] * du * du
    return out
