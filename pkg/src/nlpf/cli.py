"""Command-line interface: run, verify, repro, metrics.

Only the standard library is imported at module level so that --threads can
pin the BLAS/OpenMP pools through environment variables before numpy loads.
"""

from __future__ import annotations

import argparse
import os
import sys

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _pin_threads(n: int) -> None:
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def _default_output_root() -> str:
    return os.environ.get("NLPF_OUTPUT_DIR", os.path.join(os.getcwd(), "nlpf_out"))


def _resolve_outdir(args_outdir, config_dir, label) -> str:
    if args_outdir:
        return args_outdir
    root = _default_output_root()
    return os.path.join(root, config_dir or label)


def cmd_run(args) -> int:
    from .config import ConfigError, parse_config_file
    from .fields_io import build_report, write_report
    from .repro import write_snapshots
    from .stepper import run, timestep_admissibility

    try:
        cfg = parse_config_file(args.config, overrides=args.override)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    outdir = _resolve_outdir(args.output_dir, cfg.output_dir, cfg.label)
    os.makedirs(outdir, exist_ok=True)
    report_path = os.path.join(outdir, "report.json")
    try:
        result = run(cfg)
    except Exception as exc:  # report is emitted even on failure paths
        write_report(report_path, build_report(config=cfg, status="error",
                                               error=str(exc)))
        print(f"error: {exc}", file=sys.stderr)
        return 1

    manifest = write_snapshots(result, outdir)
    report = build_report(result=result, snapshots_manifest=manifest)
    if cfg.is_nonlocal:
        adm = timestep_admissibility(cfg, C_I=args.C_I)
        report["admissibility"] = {
            "status": adm.status, "bound": adm.bound, "message": adm.message,
        }
        if adm.status == "warn":
            print(f"warning: step-size admissibility: {adm.message}")
    write_report(report_path, report)

    summary = report["diagnostics_summary"]
    print(f"run {cfg.label}: {result.n_steps} steps, "
          f"{len(result.states)} snapshots -> {outdir}")
    print(f"  max |complementarity| = {summary['comp_residual_max']}")
    print(f"  max enthalpy drift    = {summary['enthalpy_drift_max']}")
    print(f"  bound violation       = {summary['bound_violation_max']}")
    bad = report["status"] != "ok" or result.non_converged_steps
    if bad and not args.allow_warnings:
        print("invariant failure or non-converged solver steps (see report.json)",
              file=sys.stderr)
        return 2
    return 0


def cmd_verify(_args) -> int:
    from .verify import run_all_checks

    checks = run_all_checks()
    name_w = max(len(c.name) for c in checks)
    n_fail = 0
    for c in checks:
        status = "PASS" if c.ok else "FAIL"
        n_fail += not c.ok
        detail = f"  ({c.detail})" if c.detail else ""
        print(f"{status}  {c.name:<{name_w}}  value={c.value:.3e}  "
              f"tol={c.tol:.1e}{detail}")
    print(f"{len(checks) - n_fail}/{len(checks)} checks passed")
    return 0 if n_fail == 0 else 1


def cmd_repro(args) -> int:
    from .repro import REPRO_DRIVERS

    driver = REPRO_DRIVERS[args.example]
    outdir = args.output_dir or os.path.join(_default_output_root(), args.example)
    summary = driver(outdir, log=print)
    n_fail = 0
    for name, ok, detail in summary["checks"]:
        status = "PASS" if ok else "FAIL"
        n_fail += not ok
        print(f"{status}  {name}  [{detail}]")
    if n_fail:
        print(f"{n_fail} reproduction check(s) failed", file=sys.stderr)
        return 2
    return 0


def cmd_metrics(args) -> int:
    import numpy as np

    from .fields_io import read_field
    from .grid import build_grid
    from .metrics import interface_width

    coords, values = read_field(args.field)
    dim = coords.shape[1]
    keep = np.all((coords >= -1e-9) & (coords <= 1.0 + 1e-9), axis=1)
    coords, values = coords[keep], values[keep]
    n_axis = round(len(values) ** (1.0 / dim))
    if n_axis**dim != len(values):
        print("error: field does not cover a full tensor grid on the unit "
              "domain", file=sys.stderr)
        return 1
    grid = build_grid(dim, 1.0 / (n_axis - 1), 0.0)
    rep = interface_width(grid, values, tol=args.tol)
    print(f"interface width (cells): min = {rep.width_min}, max = {rep.width_max}")
    print(f"widths: {rep.widths}")
    print(f"pure-phase fractions: low = {rep.fraction_low:.4f}, "
          f"high = {rep.fraction_high:.4f}")
    print(f"counting convention: {rep.convention}; tol = {rep.tol:g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nlpf",
        description="Nonlocal phase-field solver (obstacle potential, "
        "uniform grids)",
    )
    p.add_argument("--threads", type=int, default=1,
                   help="BLAS/OpenMP thread count (default 1, reproducible)")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="execute a simulation from a config file")
    pr.add_argument("config")
    pr.add_argument("--override", action="append", default=[],
                    metavar="section.key=value")
    pr.add_argument("--output-dir")
    pr.add_argument("--allow-warnings", action="store_true")
    pr.add_argument("--C-I", type=float, default=0.0, dest="C_I",
                    help="exterior constant for the advisory step-size check")
    pr.set_defaults(func=cmd_run)

    pv = sub.add_parser("verify", help="run the desk-scale verification checks")
    pv.set_defaults(func=cmd_verify)

    pp = sub.add_parser("repro", help="reproduce a reference experiment")
    pp.add_argument("example", choices=("ex1", "ex2", "ex3"))
    pp.add_argument("--output-dir")
    pp.set_defaults(func=cmd_repro)

    pm = sub.add_parser("metrics", help="re-run interface metrics on a saved field")
    pm.add_argument("field", help="field CSV written by a run")
    pm.add_argument("--tol", type=float, default=1e-3)
    pm.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _pin_threads(args.threads)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
