#!/usr/bin/env python3
"""
Time the solvers against trajectory length.

Writes one CSV row per (N, solver):

    N,solver,kernel_build_s,per_iter_solve_s,per_query_s,total_s,iterations

and <out>.slopes.json with the log-log slope of every timing column per
solver. The dense baseline is skipped above N = 800.
"""

import os

# Trials run in a process pool; each one stays on a single BLAS thread.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402

_project_root = Path(__file__).resolve().parent
if str(_project_root) not in sys.path:
    sys.path.insert(0, str(_project_root))

from lib import console as cs  # noqa: E402
from lib.bench import SOLVERS, TIMING_COLUMNS, parse_solvers, run_bench  # noqa: E402
from lib.commands import EXIT_OK, ToolArgumentParser, add_common_arguments, run_tool  # noqa: E402
from lib.config import CONFIG  # noqa: E402
from lib.utils import parse_number_list  # noqa: E402


def build_parser() -> argparse.ArgumentParser:
    parser = ToolArgumentParser(
        description="Benchmark solve and query time against trajectory length",
        epilog=f"Pool size: --workers, else ${CONFIG.THREADS_ENV_VAR}, else the CPU count.",
    )
    parser.add_argument("--n", default="500,1000,2000,4000,8000", help="Comma-separated knot counts")
    parser.add_argument(
        "--solvers",
        default="sparse-lti,sparse-ntv",
        help=f"Comma-separated subset of {','.join(SOLVERS)} (dense is an alias)",
    )
    parser.add_argument("--out", required=True, help="Bench CSV to write")
    parser.add_argument("--queries", type=int, default=CONFIG.BENCH_QUERIES, help="Random queries per trial")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, help="Process pool size")
    parser.add_argument("--max-iters", type=int, default=CONFIG.MAX_ITERS)
    add_common_arguments(parser)
    return parser


def run(args: argparse.Namespace) -> int:
    sizes = parse_number_list(args.n, int)
    solvers = parse_solvers(args.solvers)
    cs.StatusIndicator("parsing").add_message(
        f"Benchmarking {', '.join(solvers)} at N = {', '.join(str(n) for n in sizes)}"
    ).emit()
    report = run_bench(sizes, solvers, args.queries, args.seed, args.workers, args.max_iters)
    slopes_path = report.save(args.out)

    cs.print_table(
        "Timings (s)",
        ["solver", "N", *TIMING_COLUMNS, "iterations"],
        [[r["solver"], r["N"], *(r[c] for c in TIMING_COLUMNS), r["iterations"]] for r in report.rows],
    )
    slopes = report.slopes()
    cs.print_table(
        "Log-log slopes",
        ["solver", *TIMING_COLUMNS],
        [[s, *(slopes[s][c] for c in TIMING_COLUMNS)] for s in report.solvers],
    )
    cs.StatusIndicator("saved").add_message(f"Bench rows written to {args.out}").emit()
    cs.StatusIndicator("saved").add_message(f"Slopes written to {slopes_path}").emit()
    return EXIT_OK


def main(argv=None) -> int:
    return run_tool(build_parser(), run, argv)


if __name__ == "__main__":
    sys.exit(main())
