"""
Shared plumbing for the command-line tools.

Prior construction from flags, dataset-to-problem setup, trajectory CSV
output and the error/exit-code convention:

    exit 0  success
    exit 1  any failure, with {"error": ...} as one JSON line on stderr
    exit 2  no convergence (partial results are still written)
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Callable, List, Optional, Sequence, TextIO, Union

import numpy as np

from lib import console as cs
from lib.config import CONFIG
from lib.errors import ConfigError, NotConverged, SteamError
from lib.estimator import ConvergenceConfig, SolveReport, SteamProblem
from lib.hypertrain import TrainResult
from lib.measurements import MeasurementLog
from lib.priors import PRIOR_KINDS, PriorKind, make_prior_kind
from lib.simworld import Dataset
from lib.utils import body_to_inertial, inertial_to_body, parse_number_list, uniform_times

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NOT_CONVERGED = 2

TRAJECTORY_FORMAT = "steamgp-trajectory"


def error_document(exc: BaseException) -> dict:
    if isinstance(exc, SteamError):
        return exc.to_dict()
    doc = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, OSError) and exc.filename:
        doc["path"] = str(exc.filename)
    return doc


def write_error(exc: BaseException, stream: Optional[TextIO] = None) -> None:
    stream = stream or sys.stderr
    stream.write(json.dumps(error_document(exc)) + "\n")
    stream.flush()


def run_guarded(run: Callable[[argparse.Namespace], int], args: argparse.Namespace) -> int:
    """Run a tool body and map failures to exit codes."""
    try:
        return run(args)
    except NotConverged as e:
        write_error(e)
        return EXIT_NOT_CONVERGED
    except (SteamError, OSError, KeyError, ValueError) as e:
        logger.debug("tool failed", exc_info=True)
        write_error(e)
        return EXIT_FAILURE


class ToolArgumentParser(argparse.ArgumentParser):
    """Usage errors raise ConfigError instead of printing usage and exiting 2."""

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


def run_tool(
    parser: argparse.ArgumentParser, run: Callable[[argparse.Namespace], int], argv: Optional[Sequence[str]] = None
) -> int:
    """Parse argv and run the tool body; flag errors exit 1 like any other failure."""
    try:
        args = parser.parse_args(argv)
    except ConfigError as e:
        write_error(e)
        return EXIT_FAILURE
    except SystemExit as e:
        # --help
        return EXIT_OK if not e.code else EXIT_FAILURE
    cs.setup_logging(args.verbose)
    return run_guarded(run, args)


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--verbose", "-v", action="store_true", help="Show debug logging")


def add_prior_arguments(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument(
        "--prior",
        choices=sorted(PRIOR_KINDS),
        required=required,
        default=None if required else "lti",
        help="Motion prior: lti (inertial constant velocity), ntv (body-frame), matern",
    )
    parser.add_argument("--qc", help="Comma-separated Qc diagonal (default per prior)")
    parser.add_argument("--qc-file", help="JSON document with an 'entries' list (train output)")
    parser.add_argument("--length-scale", type=float, help="Matern length scale (s)")
    parser.add_argument("--sigma", type=float, help="Matern standard deviation")


def kind_from_args(args: argparse.Namespace) -> PriorKind:
    qc: Optional[List[float]] = None
    if getattr(args, "qc_file", None):
        qc = TrainResult.load_entries(args.qc_file)
    if getattr(args, "qc", None):
        if qc is not None:
            raise ConfigError("--qc and --qc-file are mutually exclusive")
        qc = parse_number_list(args.qc)
    params = {}
    if args.prior == "matern":
        if getattr(args, "length_scale", None) is not None:
            params["length_scale"] = args.length_scale
        if getattr(args, "sigma", None) is not None:
            params["sigma"] = args.sigma
    return make_prior_kind(args.prior, qc=qc, **params)


def state_in_convention(state: np.ndarray, source: str, target: str) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if source == target:
        return state.copy()
    if target == "body":
        return inertial_to_body(state)
    return body_to_inertial(state)


def problem_for_dataset(
    dataset: Dataset,
    kind: PriorKind,
    keytime_spacing: Optional[float] = None,
    use_odometry: bool = True,
    bearing_frame: Optional[str] = None,
    convergence: Optional[ConvergenceConfig] = None,
    initial_guess: str = "prior",
    integration_step: Optional[float] = None,
):
    """Problem and log for a simulated dataset, first knot locked to the true start."""
    log: MeasurementLog = dataset.log if use_odometry else dataset.log.without_odometry()
    x0 = state_in_convention(dataset.truth.initial_state, dataset.truth.convention, kind.velocity_convention)
    problem = SteamProblem.for_log(
        kind,
        log,
        start_time=float(dataset.truth.times[0]),
        end_time=float(dataset.config.duration),
        keytime_spacing=keytime_spacing,
        n_landmarks=dataset.truth.landmarks.shape[0],
        convergence=convergence or ConvergenceConfig(),
        bearing_frame=bearing_frame or dataset.config.bearing_frame,
        initial_state=x0,
        initial_guess=initial_guess,
        integration_step=integration_step,
    )
    return problem, log


def trajectory_columns(convention: str) -> List[str]:
    return ["t", "x", "y", "theta", *CONFIG.VELOCITY_COLUMNS[convention], "sigma3_x", "sigma3_y", "sigma3_theta"]


def trajectory_rows(report: SolveReport, taus: Sequence[float]) -> np.ndarray:
    """Query rows t, state, 3-sigma (x, y, theta) at the given times."""
    taus = np.asarray(taus, dtype=float)
    means, covs = report.query(taus)
    sig = 3.0 * np.sqrt(np.clip(np.diagonal(covs, axis1=1, axis2=2)[:, :3], 0.0, None))
    return np.column_stack([taus, means, sig])


def write_trajectory_csv(
    report: SolveReport, path: Union[str, Path, TextIO], query_rate: Optional[float] = None
) -> int:
    """Knot rows plus optional uniform query rows, sorted by time.

    Returns the number of rows written.
    """
    convention = report.kind.velocity_convention
    rows = [(r, "knot") for r in trajectory_rows(report, report.times)]
    if query_rate:
        taus = uniform_times(report.times[0], report.times[-1], query_rate)
        rows += [(r, "query") for r in trajectory_rows(report, taus)]
    rows.sort(key=lambda item: (item[0][0], item[1] == "query"))
    header = (
        f"# format={TRAJECTORY_FORMAT} version={CONFIG.TRAJECTORY_VERSION} "
        f"prior={report.kind.name} velocity={convention}\n"
    )

    def _write(f):
        f.write(header)
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([*trajectory_columns(convention), "row"])
        for values, source in rows:
            writer.writerow([repr(float(v)) for v in values] + [source])

    if hasattr(path, "write"):
        _write(path)
    else:
        with open(path, "w", encoding="utf-8", newline="") as f:
            _write(f)
    return len(rows)
