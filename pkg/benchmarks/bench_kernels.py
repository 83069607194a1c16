"""Timing comparison of the jitted kernels against the numpy fallback.

Run:  python benchmarks/bench_kernels.py [--n 128] [--repeats 200]

Times the hot kernels (transport right-hand side, tridiagonal collision
solve, relaxation update, dissipation terms) and one full evolution
step on both backends, after a warm-up call so jit compilation does not
count.  Outputs include the speedup factor and a cross-backend
agreement check.
"""

import argparse
import time

import numpy as np

from hypoflow import kernels
from hypoflow.evolution import cfl_limit, step
from hypoflow.grid import Grid, PhaseField
from hypoflow.model import KineticModel, maxwellian_background


def build_problem(n):
    grid = Grid(n_x=n, length_x=2 * np.pi, n_v=n, v_max=6.0, dt=1e-3, window=1.0)
    temp = 1.0 + 0.5 * np.sin(2 * np.pi * grid.x / grid.length_x)
    background = maxwellian_background(grid, temp)
    force = 0.3 * np.sin(grid.x)[:, None] * np.ones((1, n))
    model = KineticModel("fp", background, force, grid)
    rng = np.random.default_rng(0)
    f = background * (1.0 + 0.2 * rng.normal(size=(n, n)))
    f_stat = background / grid.length_x
    return grid, model, f, f_stat


def time_call(fn, repeats):
    fn()  # warm-up (jit compilation, caches)
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=128)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    grid, model, f, f_stat = build_problem(args.n)
    w_iface = model.m_iface * 0.5 * (
        (f_stat / model.background)[:, :-1] + (f_stat / model.background)[:, 1:]
    )
    cases = {
        "transport_rhs": lambda impl: impl.transport_rhs(
            f, grid.v, model.g_iface, grid.dx, grid.dv, 1, False
        ),
        "fp_apply": lambda impl: impl.fp_apply(
            f, model.background, model.m_iface, grid.dv
        ),
        "fp_cn_solve": lambda impl: impl.fp_cn_solve(
            f, model.background, model.m_iface, grid.dv, 1e-3
        ),
        "bgk_relax": lambda impl: impl.bgk_relax(f, model.background, grid.dv, 1e-3),
        "fp_dissipation_terms": lambda impl: impl.fp_dissipation_terms(
            f, f_stat, w_iface, grid.dv
        ),
    }

    impl_np = kernels.get_impl("numpy")
    try:
        impl_nb = kernels.get_impl("numba")
    except ImportError:
        impl_nb = None
        print("numba unavailable; timing the numpy backend only")

    print(f"grid {args.n}x{args.n}, {args.repeats} repeats per kernel")
    header = f"{'kernel':24s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s} {'agree':>10s}"
    print(header)
    print("-" * len(header))
    for name, call in cases.items():
        t_np = time_call(lambda: call(impl_np), args.repeats)
        if impl_nb is None:
            print(f"{name:24s} {t_np*1e6:10.1f}us {'-':>12s} {'-':>9s} {'-':>10s}")
            continue
        t_nb = time_call(lambda: call(impl_nb), args.repeats)
        diff = np.abs(call(impl_np) - call(impl_nb)).max()
        scale = max(np.abs(call(impl_np)).max(), 1.0)
        print(
            f"{name:24s} {t_np*1e6:10.1f}us {t_nb*1e6:10.1f}us "
            f"{t_np/t_nb:8.1f}x {diff/scale:9.1e}"
        )

    # one full split step through the active backend
    field = PhaseField(f, grid)
    dt = 0.5 * cfl_limit(model)
    t_step = time_call(lambda: step(field, model, dt=dt), max(20, args.repeats // 5))
    print(f"\nfull step via backend {kernels.BACKEND!r}: {t_step*1e3:.3f} ms")


if __name__ == "__main__":
    main()
