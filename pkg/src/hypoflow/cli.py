"""Command line entry point.

Subcommands: steady, evolve, coercivity, bogovskii, certify, recursion,
selftest.  Every run is deterministic given the scenario file and seed;
all CSV output uses 17 significant digits and every artifact embeds the
scenario hash.  Module errors exit nonzero after writing a
machine-readable error record.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .errors import HypoflowError
from .evolution import evolve, trajectory_to_csv
from .grid import write_field
from .scenario import (
    NAMED_SCENARIOS,
    ScenarioConfig,
    build_grid,
    build_model,
    build_perturbation,
    load_scenario,
)
from .steady import compute_stationary, save_state, states_agree

log = logging.getLogger("hypoflow")


def _fmt(x):
    return f"{x:.17g}"


def _setup_logging():
    level = os.environ.get("HYPOFLOW_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"not serialisable: {type(obj)}")


def _load_config(args):
    if args.config:
        config = load_scenario(args.config)
    else:
        config = NAMED_SCENARIOS[args.scenario]
    if args.seed is not None:
        data = config.to_dict()
        data["seed"] = args.seed
        config = ScenarioConfig.from_dict(data)
    return config


def _prepare(config, refine):
    grid = build_grid(config, refine=refine)
    model = build_model(config, grid)
    return grid, model


def cmd_steady(args, config, out):
    grid, model = _prepare(config, args.refine)
    state = compute_stationary(model, method="long_time")
    summary = {"config_hash": config.config_hash(), "method_agreement": None}
    if grid.n_x * grid.n_v <= 65536:
        oracle = compute_stationary(model, method="nullspace")
        summary["method_agreement"] = states_agree(state, oracle)
    save_state(out, state, model, config.config_hash())
    summary.update(
        {
            "residual": state.residual,
            "ball_min": state.ball_min,
            "regularity": state.regularity,
        }
    )
    _write_json(out / "steady_summary.json", summary)
    return 0


def cmd_evolve(args, config, out):
    grid, model = _prepare(config, args.refine)
    state = compute_stationary(model, method="long_time")
    f0 = build_perturbation(config, state, grid)
    traj = evolve(f0, model, state.f_stat, window=config.window * config.windows
                  if args.full_horizon else None)
    trajectory_to_csv(out / "trajectory.csv", traj,
                      header_comment=f"config_hash={config.config_hash()}")
    write_field(out / "initial.bin", f0)
    write_field(out / "final.bin", traj.snapshots[-1])
    _write_json(
        out / "evolve_summary.json",
        {
            "config_hash": config.config_hash(),
            "zero_mean": traj.zero_mean,
            "steps": traj.n_steps,
            "norm_initial": traj.norm_sq[0],
            "norm_final": traj.norm_sq[-1],
            "max_balance_defect": float(traj.balance_defect.max()),
        },
    )
    return 0


def cmd_coercivity(args, config, out):
    from .coercivity import build_test_functions, coercivity_constants

    grid, model = _prepare(config, args.refine)
    state = compute_stationary(model, method="long_time")
    per_col, lam = coercivity_constants(state, model)
    tf = build_test_functions(state, model)
    with open(out / "coercivity.csv", "w", newline="") as fh:
        fh.write(f"# config_hash={config.config_hash()}\n")
        fh.write("x,coercivity_constant\n")
        for xi, ci in zip(grid.x, per_col):
            fh.write(f"{_fmt(xi)},{_fmt(ci)}\n")
    _write_json(
        out / "coercivity_summary.json",
        {
            "config_hash": config.config_hash(),
            "coercivity_constant": lam,
            "moment_condition": tf.max_condition,
            "test_function_bounds": tf.bounds,
        },
    )
    return 0


def cmd_bogovskii(args, config, out):
    from .bogovskii import Slab, bogovskii_solve
    from .coercivity import make_slab_sampling

    rows = []
    for level in range(args.refine + 1):
        grid, model = _prepare(config, level)
        state = compute_stationary(model, method="long_time")
        f0 = build_perturbation(config, state, grid)
        from .coercivity import _window_step_count

        n_fine = _window_step_count(model, grid.window, config.slab_cells)
        traj = evolve(
            f0, model, state.f_stat, window=grid.window,
            dt=grid.window / n_fine, snapshot_stride=1,
        )
        sampling = make_slab_sampling(traj, config.slab_cells)
        dens = np.stack(
            [
                traj.field_at(int(s)).values.sum(axis=1) * grid.dv
                for s in sampling.center_steps
            ]
        )
        weak = config.moment_exponent_ell if config.wall_x else None
        res = bogovskii_solve(
            dens,
            sampling.slab,
            state.density.values,
            state.weight.values,
            weak_ell=weak,
            x_coords=grid.x if weak is not None else None,
        )
        rows.append(
            (level, res.ratio, res.divergence_residual, res.boundary_max)
        )
        if level == 0:
            from .grid import write_plane

            window = sampling.slab.n_t * sampling.slab.dt
            length = sampling.slab.n_x * sampling.slab.dx
            write_plane(out / "divergence_field_time.bin", res.f0_faces,
                        window, length)
            write_plane(out / "divergence_field_space.bin", res.f1_faces,
                        window, length)
    with open(out / "bogovskii.csv", "w", newline="") as fh:
        fh.write(f"# config_hash={config.config_hash()}\n")
        fh.write("refinement,ratio,divergence_residual,boundary_max\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    _write_json(
        out / "bogovskii_summary.json",
        {"config_hash": config.config_hash(), "levels": rows},
    )
    return 0


def cmd_certify(args, config, out):
    from .coercivity import certify

    grid, model = _prepare(config, args.refine)
    state = compute_stationary(model, method="long_time")
    f0 = build_perturbation(config, state, grid)
    cert = certify(
        model, state, f0, windows=config.windows, slab_cells=config.slab_cells
    )
    with open(out / "certificate_ledger.csv", "w", newline="") as fh:
        fh.write(f"# config_hash={config.config_hash()}\n")
        fh.write("name,kind,lhs,rhs,slack,holds\n")
        for line in cert.ledger:
            fh.write(
                f"{line.name},{line.kind},{_fmt(line.lhs)},{_fmt(line.rhs)},"
                f"{_fmt(line.slack)},{int(line.holds)}\n"
            )
    with open(out / "coercivity_per_x.csv", "w", newline="") as fh:
        fh.write(f"# config_hash={config.config_hash()}\n")
        fh.write("x,coercivity_constant\n")
        for xi, ci in zip(grid.x, cert.per_column):
            fh.write(f"{_fmt(xi)},{_fmt(ci)}\n")
    with open(out / "certificate_bounds.csv", "w", newline="") as fh:
        fh.write(f"# config_hash={config.config_hash()}\n")
        fh.write("term,ratio\n")
        for key, val in cert.extras["bound_ratio_components"].items():
            fh.write(f"{key},{_fmt(val)}\n")
    report = {
        "config_hash": config.config_hash(),
        "window": cert.window,
        "local_coercivity": cert.local_coercivity,
        "divergence_bound": cert.divergence_bound,
        "source_ratio": cert.source_ratio,
        "flux_ratio": cert.flux_ratio,
        "criterion_constant": cert.criterion_constant,
        "contraction": cert.contraction,
        "certified_rate": cert.certified_rate,
        "fitted_rate": cert.fitted_rate,
        "fit_misfit": cert.fit_misfit,
        "all_bounds_hold": cert.all_bounds_hold(),
        "extras": {
            k: v for k, v in cert.extras.items() if not isinstance(v, np.ndarray)
        },
    }
    _write_json(out / "certificate.json", report)
    with open(out / "certificate.txt", "w") as fh:
        fh.write(f"decay certificate over window T={cert.window:g}\n")
        fh.write(f"  local coercivity     {cert.local_coercivity:.6g}\n")
        fh.write(f"  divergence bound     {cert.divergence_bound:.6g}\n")
        fh.write(f"  source/flux ratios   {cert.source_ratio:.6g} {cert.flux_ratio:.6g}\n")
        fh.write(f"  criterion constant   {cert.criterion_constant:.6g}\n")
        fh.write(f"  contraction          {cert.contraction:.6g}\n")
        fh.write(f"  certified rate       {cert.certified_rate:.6g}\n")
        fh.write(f"  fitted rate          {cert.fitted_rate:.6g}\n")
        fh.write("ledger:\n")
        for line in cert.ledger:
            mark = "ok" if line.holds else "VIOLATED"
            fh.write(
                f"  [{mark}] {line.name}: lhs={line.lhs:.9g} rhs={line.rhs:.9g} "
                f"slack={line.slack:.3g}\n"
            )
    print(
        f"certificate: contraction={cert.contraction:.6f} "
        f"certified_rate={cert.certified_rate:.6g} fitted_rate={cert.fitted_rate:.6g}"
    )
    return 0


def cmd_recursion(args, config, out):
    from .decay import recursion_verify

    rows = []
    ok = True
    for a in (0.25, 0.5, 1.0):
        for eps in (0.1, 0.5):
            chk = recursion_verify(1.0, eps, a, args.steps)
            rows.append(
                (a, eps, int(chk.one_step_ok), int(chk.telescope_ok),
                 chk.tail_slope, chk.expected_slope)
            )
            ok = ok and chk.one_step_ok and chk.telescope_ok
    with open(out / "recursion.csv", "w", newline="") as fh:
        fh.write(f"# config_hash={config.config_hash()}\n")
        fh.write("a,eps,one_step_ok,telescope_ok,tail_slope,expected_slope\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    with open(out / "recursion_series.csv", "w", newline="") as fh:
        fh.write(f"# config_hash={config.config_hash()}\n")
        fh.write("a,eps,n,value,inverse_power\n")
        for a in (0.25, 0.5, 1.0):
            for eps in (0.1, 0.5):
                chk = recursion_verify(1.0, eps, a, min(args.steps, 200))
                for n, y in enumerate(chk.values):
                    inv = y ** (-2.0 * a) if y > 0 else float("inf")
                    fh.write(f"{_fmt(a)},{_fmt(eps)},{n},{_fmt(y)},{_fmt(inv)}\n")
    _write_json(
        out / "recursion_summary.json",
        {"config_hash": config.config_hash(), "all_ok": ok},
    )
    return 0 if ok else 1


def cmd_selftest(args, config, out):
    """Fast invariant suite on a reduced copy of the scenario."""
    from . import selftest

    results = selftest.run(config, seed=config.seed)
    with open(out / "selftest.csv", "w", newline="") as fh:
        fh.write(f"# config_hash={config.config_hash()}\n")
        fh.write("check,value,threshold,passed\n")
        for row in results:
            fh.write(
                f"{row.name},{_fmt(row.value)},{_fmt(row.threshold)},{int(row.passed)}\n"
            )
    all_ok = all(r.passed for r in results)
    _write_json(
        out / "selftest_summary.json",
        {
            "config_hash": config.config_hash(),
            "passed": all_ok,
            "checks": len(results),
            "kernel_backend": kernels.BACKEND,
        },
    )
    for row in results:
        print(f"{'PASS' if row.passed else 'FAIL'} {row.name} ({row.value:.3e})")
    return 0 if all_ok else 1


COMMANDS = {
    "steady": cmd_steady,
    "evolve": cmd_evolve,
    "coercivity": cmd_coercivity,
    "bogovskii": cmd_bogovskii,
    "certify": cmd_certify,
    "recursion": cmd_recursion,
    "selftest": cmd_selftest,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hypoflow",
        description="kinetic steady states, dissipation and decay certificates",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, default=None, help="scenario JSON file")
    parser.add_argument(
        "--scenario", choices=sorted(NAMED_SCENARIOS), default="default",
        help="built-in scenario when no --config is given",
    )
    parser.add_argument("--out", type=Path, default=Path("out"))
    parser.add_argument("--jobs", type=int, default=1,
                        help="cap on worker threads of the jit backend")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed")
    parser.add_argument("--refine", type=int, default=0,
                        help="halve all mesh widths this many times")
    parser.add_argument("--full-horizon", action="store_true",
                        help="evolve over all windows instead of one")
    parser.add_argument("--steps", type=int, default=10_000,
                        help="recursion steps for the decay checks")
    return parser


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.jobs and kernels.BACKEND == "numba":
        import numba

        numba.set_num_threads(max(1, min(args.jobs, numba.config.NUMBA_NUM_THREADS)))
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    try:
        config = _load_config(args)
        code = COMMANDS[args.command](args, config, out)
    except HypoflowError as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        _write_json(out / "error.json", record)
        print(json.dumps(record), file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
