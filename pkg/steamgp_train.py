#!/usr/bin/env python3
"""
Train the prior's Qc diagonal on ground-truth states.

Maximizes the log marginal likelihood of the truth table (optionally
subsampled and noisy) and writes:

    {"entries": [...], "mode": "exact|fast", "iterations": n,
     "final_lml": value, "optimizer": "ascent|lbfgs", "converged": bool}

The output plugs straight into steamgp_solve.py --qc-file.
"""

import argparse
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
    add_prior_arguments,
    kind_from_args,
    run_tool,
)
from lib.config import CONFIG  # noqa: E402
from lib.errors import NotConverged  # noqa: E402
from lib.hypertrain import MODES, OPTIMIZERS, TrainConfig, TrainingSet, train  # noqa: E402


def build_parser() -> argparse.ArgumentParser:
    parser = ToolArgumentParser(
        description="Fit the motion prior's Qc by maximum marginal likelihood",
        epilog="--qc sets the starting point; the default is the prior's default Qc.",
    )
    add_prior_arguments(parser)
    parser.add_argument("--truth", required=True, help="Ground-truth CSV (truth.csv of a dataset)")
    parser.add_argument("--out", required=True, help="Output JSON")
    parser.add_argument("--mode", choices=MODES, default="exact", help="exact keeps the observation noise")
    parser.add_argument("--optimizer", choices=OPTIMIZERS, default="ascent")
    parser.add_argument("--rate", type=float, help="Subsample the truth at this rate (Hz)")
    parser.add_argument("--obs-var", type=float, default=0.0, help="Observation noise variance")
    parser.add_argument("--noise-seed", type=int, help="Add N(0, obs-var) noise drawn with this seed")
    parser.add_argument("--initial-var", type=float, help="Free the first state with this prior variance")
    parser.add_argument("--max-iters", type=int, default=CONFIG.TRAIN_MAX_ITERS)
    parser.add_argument("--grad-tol", type=float, default=CONFIG.TRAIN_GRAD_TOL)
    add_common_arguments(parser)
    return parser


def run(args: argparse.Namespace) -> int:
    kind = kind_from_args(args)
    training = TrainingSet.from_truth(
        args.truth, kind, rate_hz=args.rate, obs_var=args.obs_var, noise_seed=args.noise_seed
    )
    config = TrainConfig(
        mode=args.mode,
        optimizer=args.optimizer,
        max_iters=args.max_iters,
        grad_tol=args.grad_tol,
        initial_var=args.initial_var,
        raise_on_failure=False,
    )
    cs.StatusIndicator("parsing").add_message(
        f"Training the {kind.name} prior on {len(training)} states ({args.mode} mode)"
    ).emit()
    result = train(kind, training, config)
    result.save(args.out)

    status = cs.StatusIndicator("success" if result.converged else "warning")
    status.add_message(
        f"{'Converged' if result.converged else 'Stopped'} after {result.iterations} iterations"
    ).with_summary_block(final_lml=result.final_lml)
    for i, q in enumerate(result.qc):
        status.add_item(f"Qc[{i}] = {q:.6g}")
    status.emit()
    cs.StatusIndicator("saved").add_message(f"Qc written to {args.out}").emit()
    if not result.converged:
        raise NotConverged(result, result.iterations)
    return EXIT_OK


def main(argv=None) -> int:
    return run_tool(build_parser(), run, argv)


if __name__ == "__main__":
    sys.exit(main())
