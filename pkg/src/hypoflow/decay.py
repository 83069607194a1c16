"""Rate fitting, the window-norm recursion and moment tracking.

The recursion machinery reproduces the algebraic-decay argument: the
extremal sequence saturating  eps Y_{n+1}^{2(1+a)} = Y_n^2 - Y_{n+1}^2
is generated per step by bisection, the implied one-step and telescoped
inequalities are verified at every n, and the tail log-log slope is
checked against -1/(2a).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BisectionFailure, InsufficientData

MISFIT_RELATIVE = 3e-3


@dataclass
class RateFit:
    rate: float
    residual: float          # rms deviation of log values from the fit
    log_drop: float          # fitted total decrease of the log over the range
    misfit: bool             # residual large relative to the drop: not exponential
    n_used: int


def fit_exponential(times, values, tail_fraction=0.5):
    """Least-squares rate of log(values) vs times over the tail.

    Needs at least five samples with positive values.  The misfit flag
    compares the fit residual against the fitted total log-drop: clean
    exponentials sit orders of magnitude below it, algebraically
    decaying data carries curvature of the same order as the drop.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 5:
        raise InsufficientData(f"need at least 5 samples, got {times.size}")
    if np.any(values <= 0.0):
        raise InsufficientData("values must be positive to fit a rate")
    start = min(int(times.size * (1.0 - tail_fraction)), times.size - 5)
    t = times[start:]
    y = np.log(values[start:])
    coeffs = np.polyfit(t, y, 1)
    fitted = np.polyval(coeffs, t)
    residual = float(np.sqrt(np.mean((y - fitted) ** 2)))
    drop = float(abs(coeffs[0]) * (t[-1] - t[0]))
    return RateFit(
        rate=float(-coeffs[0]),
        residual=residual,
        log_drop=drop,
        misfit=residual > MISFIT_RELATIVE * max(drop, 1e-12),
        n_used=t.size,
    )


@dataclass
class RecursionCheck:
    values: np.ndarray        # extremal sequence Y_0 .. Y_N
    one_step_ok: bool         # Y_{n+1}^2 <= Y_n^2 - eps 2^{-2(1+a)} Y_n^{2(1+a)}
    telescope_ok: bool        # 1/Y^{2a} gains at least 2 a eps 2^{-2(1+a)} per step
    tail_slope: float         # log Y vs log n slope over the tail
    expected_slope: float     # -1/(2a)
    failures: dict = field(default_factory=dict)


def _extremal_step(y_n, eps, a, tol=1e-14, max_iter=200):
    """Solve eps y^{2(1+a)} + y^2 = y_n^2 for y in (0, y_n) by bisection."""
    if y_n == 0.0:
        return 0.0
    lo, hi = 0.0, y_n
    target = y_n * y_n
    f_hi = eps * hi ** (2.0 * (1.0 + a)) + hi * hi - target
    if f_hi < 0.0:
        raise BisectionFailure("root not bracketed at the upper end")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = eps * mid ** (2.0 * (1.0 + a)) + mid * mid - target
        if f_mid > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= tol:
            return 0.5 * (lo + hi)
    raise BisectionFailure(f"bisection did not reach {tol:g} in {max_iter} steps")


def recursion_verify(y0, eps, a, n_steps):
    """Generate the extremal window-norm sequence and verify the decay
    inequalities it implies at every step.

    Requires y0 <= 1, eps < 1, a in (0, 1].
    """
    if not (0.0 <= y0 <= 1.0):
        raise ValueError("y0 must lie in [0, 1]")
    if not (0.0 < eps < 1.0):
        raise ValueError("eps must lie in (0, 1)")
    if not (0.0 < a <= 1.0):
        raise ValueError("a must lie in (0, 1]")
    y = np.empty(n_steps + 1)
    y[0] = y0
    for n in range(n_steps):
        y[n + 1] = _extremal_step(y[n], eps, a, tol=1e-14)

    gain = 2.0 * a * eps * 2.0 ** (-2.0 * (1.0 + a))
    drop = eps * 2.0 ** (-2.0 * (1.0 + a))
    one_step_ok = True
    telescope_ok = True
    failures = {}
    for n in range(n_steps):
        if y[n] == 0.0:
            break
        lhs = y[n + 1] ** 2
        rhs = y[n] ** 2 - drop * y[n] ** (2.0 * (1.0 + a))
        if lhs > rhs * (1.0 + 1e-12) + 1e-300:
            one_step_ok = False
            failures.setdefault("one_step", n)
        inc = 1.0 / y[n + 1] ** (2.0 * a) - 1.0 / y[n] ** (2.0 * a)
        if inc < gain * (1.0 - 1e-12):
            telescope_ok = False
            failures.setdefault("telescope", n)

    tail_slope = float("nan")
    if y0 > 0.0:
        n_idx = np.arange(n_steps + 1)
        tail = n_idx >= max(n_steps // 2, 1)
        slope = np.polyfit(np.log(1.0 + n_idx[tail]), np.log(y[tail]), 1)[0]
        tail_slope = float(slope)
    return RecursionCheck(
        values=y,
        one_step_ok=one_step_ok,
        telescope_ok=telescope_ok,
        tail_slope=tail_slope,
        expected_slope=-1.0 / (2.0 * a),
        failures=failures,
    )


def interpolation_slack(density, inverse_weight, x_coords, k, ell):
    """Relative slack of the moment interpolation inequality for one field.

    Checks ||g m^ell||^2 <= ||g||^{2(1-ell/k)} ||g m^k||^{2 ell/k} with
    m = sqrt(1 + x^2), all norms weighted by inverse_weight; the result
    is (rhs - lhs) / rhs >= 0 up to round-off (exact Hoelder).
    """
    g2 = np.asarray(density, dtype=float) ** 2 * np.asarray(inverse_weight)
    mom = 1.0 + np.asarray(x_coords) ** 2
    lhs = float((g2 * mom**ell).sum())
    n0 = float(g2.sum())
    nk = float((g2 * mom**k).sum())
    rhs = n0 ** (1.0 - ell / k) * nk ** (ell / k)
    if rhs == 0.0:
        return 0.0
    return (rhs - lhs) / rhs


def interpolation_check(traj_densities, density_stat, x_coords, k, ell):
    """Worst relative slack of the interpolation inequality over a run."""
    inv_w = 1.0 / np.asarray(density_stat)
    worst = math.inf
    for dens in traj_densities:
        worst = min(worst, interpolation_slack(dens, inv_w, x_coords, k, ell))
    return worst


@dataclass
class MomentSeries:
    times: np.ndarray
    values: np.ndarray        # integral of density^2 (1+x^2)^k per time
    bound: float              # sup over the run
    growing: bool             # still growing at the final time


def moment_track(times, densities, x_coords, dx, k):
    """Track the k-th moment of the squared spatial density over a run."""
    mom = (1.0 + np.asarray(x_coords) ** 2) ** k
    vals = np.array([float((d**2 * mom).sum() * dx) for d in densities])
    growing = bool(vals.size >= 3 and vals[-1] > vals[-2] > vals[-3])
    return MomentSeries(
        times=np.asarray(times, dtype=float),
        values=vals,
        bound=float(vals.max()) if vals.size else 0.0,
        growing=growing,
    )


def min_form_epsilon(window_norm_int, diss_int, window, a):
    """Measured constant of the min-form criterion over one window:
    the largest eps with eps min(S/T, (S/T)^{1+a}) <= integral of D."""
    s_over_t = window_norm_int / window
    denom = min(s_over_t, s_over_t ** (1.0 + a))
    if denom <= 0.0:
        return math.inf
    return diss_int / denom
