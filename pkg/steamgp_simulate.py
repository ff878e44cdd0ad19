#!/usr/bin/env python3
"""
Simulate a planar robot world and write a dataset directory.

Samples the ground-truth trajectory from the configured motion prior,
places the landmarks and generates odometry, range/bearing and optional
pose-fix measurements. Writes world.json, measurements.jsonl, truth.csv
and landmarks.csv.
"""

import argparse
import sys
from pathlib import Path

_project_root = Path(__file__).resolve().parent
if str(_project_root) not in sys.path:
    sys.path.insert(0, str(_project_root))

from lib import console as cs  # noqa: E402
from lib.commands import EXIT_OK, ToolArgumentParser, add_common_arguments, run_tool  # noqa: E402
from lib.simworld import WorldConfig, save_dataset, simulate  # noqa: E402


def build_parser() -> argparse.ArgumentParser:
    parser = ToolArgumentParser(
        description="Simulate a landmark world and write a dataset directory",
        epilog="World config keys are listed in QUICK_REFERENCE.md; unknown keys are rejected.",
    )
    parser.add_argument("--config", required=True, help="World config JSON")
    parser.add_argument("--out", required=True, help="Output dataset directory")
    parser.add_argument("--seed", type=int, help="Override the config seed")
    parser.add_argument("--duration", type=float, help="Override the config duration (s)")
    add_common_arguments(parser)
    return parser


def run(args: argparse.Namespace) -> int:
    data = WorldConfig.from_file(args.config).to_dict()
    if args.seed is not None:
        data["seed"] = args.seed
    if args.duration is not None:
        data["duration"] = args.duration
    config = WorldConfig.from_dict(data)

    cs.StatusIndicator("parsing").add_message(
        f"Simulating {config.duration:g} s with the {config.prior} prior (seed {config.seed})"
    ).emit()
    dataset = simulate(config)
    out = save_dataset(dataset, args.out)

    log = dataset.log
    cs.StatusIndicator("saved").add_message(f"Dataset written to {out}").with_summary_block(
        truth_states=dataset.truth.times.size,
        landmarks=dataset.truth.landmarks.shape[0],
        odom=log.count("odom"),
        rb=log.count("rb"),
        pose=log.count("pose"),
    ).emit()
    unseen = dataset.truth.landmarks.shape[0] - len(log.landmark_ids())
    if unseen:
        cs.StatusIndicator("warning").add_message(
            f"{unseen} landmarks never come within {config.max_range:g} m"
        ).emit()
    return EXIT_OK


def main(argv=None) -> int:
    return run_tool(build_parser(), run, argv)


if __name__ == "__main__":
    sys.exit(main())
