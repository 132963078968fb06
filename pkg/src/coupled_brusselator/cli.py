"""Command-line entry point ``brusselator``.

Exit codes: 0 all checks pass, 1 a diagnostic failed, 2 usage or
configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import load_config
from .errors import BrusselatorError, ConfigError
from .io import format_summary

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="brusselator", description="Coupled two-cell Brusselator experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "simulate": "integrate and write time series and snapshots (no diagnostics)",
        "verify": "run the selected diagnostic suite",
        "trace": "estimate the trace averages q_m",
        "bounds": "print the closed-form constants only",
        "sweep": "run a parameter sweep over the sweep.* axes",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, metavar="N", help="single seed overriding the config")
        p.add_argument("--workers", type=int, default=1, metavar="N", help="sweep worker processes")
    return parser


def _prepare(args):
    cfg = load_config(args.config)
    kw = {}
    if args.out is not None:
        kw["out"] = args.out
    if args.seed is not None:
        kw["seeds"] = (args.seed,)
    if args.command == "simulate":
        kw.update(diag_decay=False, diag_absorption=False, diag_symmetry=False, diag_tails=False,
                  diag_truncated_h1=False, diag_trace=False, diag_dimension=False)
    elif args.command == "trace":
        kw.update(diag_trace=True)
    return dataclasses.replace(cfg, **kw)


def main(argv=None):
    from .runner import run_experiment, sweep

    args = build_parser().parse_args(argv)
    try:
        cfg = _prepare(args)
    except OSError as err:
        print(f"error: cannot read config: {err}", file=sys.stderr)
        return EXIT_USAGE
    except BrusselatorError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "sweep":
        if args.workers < 1:
            print("error: --workers must be at least 1", file=sys.stderr)
            return EXIT_USAGE
        try:
            reports, rows = sweep(cfg, out_dir=cfg.out, workers=args.workers)
        except ConfigError as err:
            print(f"error: {err}", file=sys.stderr)
            return EXIT_USAGE
        for row in rows:
            print(f"run {row['run']}: status={row['status']} K0={row['K0']!r} sup_norm_sq={row['sup_norm_sq']!r}")
        codes = [r.exit_code for r in reports]
        if EXIT_NUMERICAL in codes:
            return EXIT_NUMERICAL
        if EXIT_USAGE in codes:
            return EXIT_USAGE
        return EXIT_FAIL if EXIT_FAIL in codes else EXIT_OK

    report = run_experiment(cfg, out_dir=cfg.out, simulate_runs=args.command != "bounds")
    if args.command == "bounds":
        sys.stdout.write(format_summary([("constants." + k, v) for k, v in report.constants.items()]))
    else:
        sys.stdout.write(report.summary_text())
    if report.status != "ok":
        print(f"error: {report.error}", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
