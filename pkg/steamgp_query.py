#!/usr/bin/env python3
"""
Query a saved solution at arbitrary times.

Each query touches only the two bracketing knots, so its cost does not
depend on the trajectory length. Rows go to stdout (or --out) as CSV:

    t,x,y,theta,<velocity>,sigma3_x,sigma3_y,sigma3_theta
"""

import argparse
import csv
import sys
from pathlib import Path

_project_root = Path(__file__).resolve().parent
if str(_project_root) not in sys.path:
    sys.path.insert(0, str(_project_root))

from lib import console as cs  # noqa: E402
from lib.commands import (  # noqa: E402
    EXIT_OK,
    ToolArgumentParser,
    add_common_arguments,
    run_tool,
    trajectory_columns,
    trajectory_rows,
)
from lib.errors import ConfigError  # noqa: E402
from lib.estimator import SolveReport  # noqa: E402
from lib.utils import parse_times  # noqa: E402


def build_parser() -> argparse.ArgumentParser:
    parser = ToolArgumentParser(description="Interpolate a saved solution at query times")
    parser.add_argument("--report", required=True, help="Report directory written by steamgp_solve.py")
    parser.add_argument("--times", required=True, help="Comma list or CSV file (first column)")
    parser.add_argument("--out", help="CSV output (default: stdout)")
    add_common_arguments(parser)
    return parser


def _write(report: SolveReport, taus, stream) -> None:
    rows = trajectory_rows(report, taus)
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(trajectory_columns(report.kind.velocity_convention))
    for row in rows:
        writer.writerow([repr(float(v)) for v in row])


def run(args: argparse.Namespace) -> int:
    taus = parse_times(args.times)
    if taus.size == 0:
        raise ConfigError("no query times given")
    report = SolveReport.load(args.report)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            _write(report, taus, f)
        cs.StatusIndicator("saved").add_message(f"{taus.size} query rows written to {args.out}").emit()
    else:
        _write(report, taus, sys.stdout)
    return EXIT_OK


def main(argv=None) -> int:
    return run_tool(build_parser(), run, argv)


if __name__ == "__main__":
    sys.exit(main())
