"""
Validation framework for estimation problems.

Checks knot times, the measurement log and the solver settings before a
solve and reports problems through OperationResult.
"""

from dataclasses import dataclass, field
from typing import List, Set

import numpy as np

from lib.config import CONFIG
from lib.estimator import SteamProblem
from lib.measurements import MeasurementLog
from lib.results import OperationResult


@dataclass
class ProblemState:
    """Summary of a problem and its measurement log."""

    n_knots: int = 0
    locked: bool = True
    knot_start: float = 0.0
    knot_end: float = 0.0
    min_interval: float = float("inf")
    monotonic: bool = True

    n_records: int = 0
    odom_count: int = 0
    rb_count: int = 0
    pose_count: int = 0
    first_time: float = 0.0
    last_time: float = 0.0
    median_spacing: float = 0.0

    n_landmarks: int = 0
    observed: Set[int] = field(default_factory=set)
    single_sightings: Set[int] = field(default_factory=set)
    bad_covariances: List[int] = field(default_factory=list)

    def is_empty(self) -> bool:
        return self.n_records == 0

    def unobserved(self) -> Set[int]:
        return set(range(self.n_landmarks)) - self.observed

    def out_of_range_ids(self) -> Set[int]:
        return {i for i in self.observed if i < 0 or i >= self.n_landmarks}


class ProblemValidator:
    """Validates a problem and its log before solving."""

    def __init__(self, problem: SteamProblem, log: MeasurementLog):
        self.problem = problem
        self.log = log
        self.state = self._analyze()

    def _analyze(self) -> ProblemState:
        state = ProblemState()
        times = self.problem.knot_times
        state.n_knots = times.size
        state.locked = self.problem.locked
        state.n_landmarks = self.problem.n_landmarks
        if times.size:
            state.knot_start, state.knot_end = float(times[0]), float(times[-1])
        if times.size > 1:
            dt = np.diff(times)
            state.min_interval = float(dt.min())
            state.monotonic = bool(np.all(dt > 0))

        state.n_records = len(self.log)
        state.odom_count = self.log.count("odom")
        state.rb_count = self.log.count("rb")
        state.pose_count = self.log.count("pose")
        if state.n_records:
            t = self.log.times
            state.first_time, state.last_time = float(t[0]), float(t[-1])
            epochs = np.unique(t)
            if epochs.size > 1:
                state.median_spacing = float(np.median(np.diff(epochs)))

        sightings = {}
        for i, m in enumerate(self.log):
            if m.landmark is not None:
                sightings[m.landmark] = sightings.get(m.landmark, 0) + 1
            try:
                np.linalg.cholesky(m.cov)
                symmetric = np.allclose(m.cov, m.cov.T)
            except np.linalg.LinAlgError:
                symmetric = False
            if not symmetric:
                state.bad_covariances.append(i)
        state.observed = set(sightings)
        state.single_sightings = {i for i, n in sightings.items() if n == 1}
        return state

    def validate_knots(self) -> OperationResult:
        """Knot times must be increasing, well separated and enough to solve for."""
        result = OperationResult(success=True)
        s = self.state
        if s.n_knots == 0:
            result.add_error("No knot times")
            return result
        if s.locked and s.n_knots < 2:
            result.add_error(
                "Only the locked first knot", "Nothing left to estimate; add knots or free the first knot"
            )
        if not s.monotonic:
            result.add_error("Knot times are not strictly increasing")
        elif s.min_interval < CONFIG.MIN_INTERVAL_S:
            result.add_error(
                "Degenerate knot interval",
                f"Smallest interval {s.min_interval:.3g} s is below {CONFIG.MIN_INTERVAL_S:g} s",
            )
        if not result.has_errors():
            result.add_success(
                f"{s.n_knots} knots over [{s.knot_start:g}, {s.knot_end:g}] s",
                "first knot locked" if s.locked else "first knot free",
            )
        return result

    def validate_measurements(self) -> OperationResult:
        """Measurement times, landmark ids and noise covariances."""
        result = OperationResult(success=True)
        s = self.state
        if s.is_empty():
            result.add_warning("Measurement log is empty", "The solution will be the prior mean")
            return result
        if s.first_time < s.knot_start or s.last_time > s.knot_end:
            result.add_error(
                "Measurements outside the knot range",
                f"Log covers [{s.first_time:g}, {s.last_time:g}] s, knots [{s.knot_start:g}, {s.knot_end:g}] s",
            )
        bad_ids = s.out_of_range_ids()
        if bad_ids:
            result.add_error(
                f"{len(bad_ids)} landmark ids outside 0..{s.n_landmarks - 1}",
                ", ".join(str(i) for i in sorted(bad_ids)),
                ids=sorted(bad_ids),
            )
        unobserved = s.unobserved()
        if unobserved:
            result.add_warning(
                f"{len(unobserved)} landmarks never observed",
                "Excluded from the solve: " + ", ".join(str(i) for i in sorted(unobserved)),
                ids=sorted(unobserved),
            )
        if s.single_sightings:
            result.add_info(
                f"{len(s.single_sightings)} landmarks seen only once",
                "Their positions rest on a single range/bearing record",
            )
        if s.bad_covariances:
            result.add_error(
                f"{len(s.bad_covariances)} records with a non-positive-definite covariance",
                f"First at record {s.bad_covariances[0]}",
            )
        if not result.has_errors():
            result.add_success(
                f"{s.n_records} measurements",
                f"odom {s.odom_count}, rb {s.rb_count}, pose {s.pose_count}",
            )
        return result

    def validate_keytimes(self) -> OperationResult:
        """Keytime spacing against the measurement spacing."""
        result = OperationResult(success=True)
        spacing = self.problem.keytime_spacing
        if spacing is None:
            result.add_info("All-knots mode", "One knot per measurement time")
            return result
        if self.state.median_spacing and spacing > self.state.median_spacing:
            result.add_warning(
                "Keytime spacing coarser than the measurement spacing",
                f"{spacing:g} s between keytimes, {self.state.median_spacing:g} s between measurements",
            )
        else:
            result.add_success(f"Keytimes every {spacing:g} s")
        return result

    def validate_all(self) -> OperationResult:
        return OperationResult().merge(
            (self.validate_knots(), self.validate_measurements(), self.validate_keytimes())
        )
