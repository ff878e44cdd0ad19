#!/usr/bin/env python3
"""
Estimate the trajectory and landmarks of a simulated dataset.

Writes the trajectory CSV (knot rows plus optional uniform query rows, each
with 3-sigma pose envelopes) and a report directory (report.json +
solution.npz) that steamgp_query.py can answer queries from.

Trajectory CSV:
    # format=steamgp-trajectory version=1 prior=<name> velocity=<inertial|body>
    t,x,y,theta,<xdot,ydot,thetadot | v,u,omega>,sigma3_x,sigma3_y,sigma3_theta,row
"""

import argparse
import sys
from pathlib import Path

_project_root = Path(__file__).resolve().parent
if str(_project_root) not in sys.path:
    sys.path.insert(0, str(_project_root))

from lib import console as cs  # noqa: E402
from lib.bench import knot_rms, trajectory_rms  # noqa: E402
from lib.commands import (  # noqa: E402
    EXIT_OK,
    ToolArgumentParser,
    add_common_arguments,
    add_prior_arguments,
    kind_from_args,
    problem_for_dataset,
    run_tool,
    write_trajectory_csv,
)
from lib.config import CONFIG  # noqa: E402
from lib.errors import ConfigError, NotConverged  # noqa: E402
from lib.estimator import ConvergenceConfig, solve  # noqa: E402
from lib.measurements import BEARING_FRAMES  # noqa: E402
from lib.simworld import load_dataset  # noqa: E402
from lib.validation import ProblemValidator  # noqa: E402


def build_parser() -> argparse.ArgumentParser:
    parser = ToolArgumentParser(
        description="Sparse GP trajectory and landmark estimation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            "Output columns: t,x,y,theta,<velocity>,sigma3_x,sigma3_y,sigma3_theta,row\n"
            "velocity is xdot,ydot,thetadot (lti, matern) or v,u,omega (ntv); row is knot or query.\n"
            "Exit codes: 0 ok, 1 error (JSON on stderr), 2 not converged (outputs still written)."
        ),
    )
    add_prior_arguments(parser)
    parser.add_argument("--dataset", required=True, help="Dataset directory from steamgp_simulate.py")
    parser.add_argument("--out", required=True, help="Trajectory CSV to write")
    parser.add_argument("--report", help="Report directory (default: <out stem>_report)")
    parser.add_argument("--keytime-spacing", type=float, help="Estimate at uniform keytimes this far apart (s)")
    parser.add_argument("--no-odom", action="store_true", help="Ignore wheel odometry")
    parser.add_argument("--query-rate", type=float, help="Add interpolated rows at this rate (Hz)")
    parser.add_argument("--bearing-frame", choices=BEARING_FRAMES, help="Override the dataset's bearing frame")
    parser.add_argument("--max-iters", type=int, default=CONFIG.MAX_ITERS, help="Gauss-Newton iteration limit")
    parser.add_argument("--lm-lambda", type=float, default=0.0, help="Levenberg-Marquardt damping")
    parser.add_argument(
        "--initial-guess", choices=("prior", "odometry"), default="prior", help="Starting trajectory"
    )
    add_common_arguments(parser)
    return parser


def run(args: argparse.Namespace) -> int:
    if args.query_rate is not None and args.query_rate <= 0:
        raise ConfigError("--query-rate must be positive")
    dataset = load_dataset(args.dataset)
    kind = kind_from_args(args)
    convergence = ConvergenceConfig(max_iters=args.max_iters, lm_lambda=args.lm_lambda, raise_on_failure=False)
    problem, log = problem_for_dataset(
        dataset,
        kind,
        keytime_spacing=args.keytime_spacing,
        use_odometry=not args.no_odom,
        bearing_frame=args.bearing_frame,
        convergence=convergence,
        initial_guess=args.initial_guess,
    )

    checks = ProblemValidator(problem, log).validate_all()
    if args.verbose or checks.has_warnings() or checks.has_errors():
        checks.emit_all()
    if checks.has_errors():
        raise ConfigError("problem validation failed")

    cs.StatusIndicator("parsing").add_message(
        f"Solving {problem.knot_times.size} knots with the {kind.name} prior"
    ).emit()
    report = solve(problem, log)

    out = Path(args.out)
    rows = write_trajectory_csv(report, out, args.query_rate)
    report_dir = Path(args.report) if args.report else out.with_name(out.stem + "_report")
    report.save(report_dir)

    trans, rot = knot_rms(report, dataset.truth)
    status = cs.StatusIndicator("success" if report.converged else "warning")
    status.add_message(
        f"{'Converged' if report.converged else 'Stopped'} after {report.iterations} iterations"
    ).with_summary_block(
        final_cost=report.cost_history[-1],
        knot_rms_translation_m=trans,
        knot_rms_rotation_rad=rot,
    )
    if args.query_rate:
        q_trans, q_rot = trajectory_rms(report, dataset.truth, args.query_rate)
        status.add_item(f"{args.query_rate:g} Hz RMS: {q_trans:.4g} m, {q_rot:.4g} rad")
    status.emit()
    cs.StatusIndicator("saved").add_message(f"{rows} rows written to {out}").emit()
    cs.StatusIndicator("saved").add_message(f"Report written to {report_dir}").emit()

    if not report.converged:
        raise NotConverged(report, report.iterations)
    return EXIT_OK


def main(argv=None) -> int:
    return run_tool(build_parser(), run, argv)


if __name__ == "__main__":
    sys.exit(main())
