"""Command-line entry point.

Subcommands: run, compare, validate-config.  Exit codes: 0 all checks pass,
1 check failures, 2 usage or config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys
import traceback

from .config import load_config
from .errors import ConfigurationError, KinlimError, SchemaMismatchError
from .experiments import run_experiment
from .report import compare_report, write_summary


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kinlim",
        description="kinetic scaling-limit experiments: hard spheres vs Boltzmann, weak coupling vs Landau",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment from a config file")
    run_p.add_argument("--config", required=True, help="path to the experiment config")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--out", default=None, help="output directory (overrides config)")
    run_p.add_argument("--threads", type=int, default=1, help="replica worker threads")
    run_p.add_argument("--quiet", action="store_true", help="suppress progress output")
    run_p.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    cmp_p = sub.add_parser("compare", help="compare two CSV time series")
    cmp_p.add_argument("series_a")
    cmp_p.add_argument("series_b")
    cmp_p.add_argument("--columns", default=None, help="comma-separated column subset")
    cmp_p.add_argument("--tolerance", type=float, default=0.0)
    cmp_p.add_argument("--out", default=None, help="write the comparison report as JSON")
    cmp_p.add_argument("--quiet", action="store_true")

    val_p = sub.add_parser("validate-config", help="parse and validate a config file")
    val_p.add_argument("--config", required=True)
    val_p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    try:
        if args.command == "validate-config":
            load_config(args.config)
            if not args.quiet:
                print("config ok")
            return 0

        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg.seed = args.seed
            if args.no_plots:
                cfg.plots = False
            summary = run_experiment(cfg, out_dir=args.out, threads=args.threads, quiet=args.quiet)
            return 0 if summary["passed"] else 1

        if args.command == "compare":
            columns = args.columns.split(",") if args.columns else None
            report = compare_report(args.series_a, args.series_b, columns, args.tolerance)
            if args.out:
                write_summary(args.out, report.as_dict())
            if not args.quiet:
                for col in report.columns:
                    print(
                        f"[{'PASS' if col.passed else 'FAIL'}] {col.column}: "
                        f"max={col.max_deviation:.6g} mean={col.mean_deviation:.6g}"
                    )
            return 0 if report.passed else 1
    except (ConfigurationError, SchemaMismatchError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KinlimError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    except Exception:
        traceback.print_exc()
        return 3
    return 2


if __name__ == "__main__":
    sys.exit(main())
