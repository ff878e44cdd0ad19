import numpy as np

from conftest import pose_log
from lib.commands import problem_for_dataset
from lib.estimator import SteamProblem
from lib.measurements import Measurement, MeasurementLog
from lib.priors import LtiConstVel, make_prior_kind
from lib.results import OperationResult, ResultLevel
from lib.validation import ProblemValidator


def _levels(result):
    return [m.level for m in result.messages]


def test_simulated_problem_is_valid(small_dataset):
    problem, log = problem_for_dataset(small_dataset, make_prior_kind("ntv", [0.01, 0.01, 0.005]))
    result = ProblemValidator(problem, log).validate_all()
    assert result.success
    assert not result.has_errors()
    assert ResultLevel.SUCCESS in _levels(result)


def test_unobserved_landmarks_warn(small_dataset):
    problem, log = problem_for_dataset(small_dataset, make_prior_kind("lti", [0.01, 0.01, 0.005]))
    trimmed = MeasurementLog([m for m in log if m.landmark not in (1, 3)])
    result = ProblemValidator(problem, trimmed).validate_measurements()
    assert result.success
    warnings = [m for m in result.messages if m.level == ResultLevel.WARNING]
    assert {1, 3} <= set(warnings[0].context["ids"])


def test_coarse_keytimes_warn():
    log = pose_log(0.1 * np.arange(1, 31), np.zeros((30, 3)))
    problem = SteamProblem.for_log(LtiConstVel(), log, keytime_spacing=1.0)
    result = ProblemValidator(problem, log).validate_keytimes()
    assert result.success and result.has_warnings()
    fine = SteamProblem.for_log(LtiConstVel(), log, keytime_spacing=0.05)
    assert not ProblemValidator(fine, log).validate_keytimes().has_warnings()
    assert _levels(ProblemValidator(SteamProblem.for_log(LtiConstVel(), log), log).validate_keytimes()) == [
        ResultLevel.INFO
    ]


def test_measurements_outside_knot_range_fail():
    log = pose_log([0.5, 4.0], np.zeros((2, 3)))
    result = ProblemValidator(SteamProblem(LtiConstVel(), [0.0, 1.0, 2.0]), log).validate_all()
    assert not result.success
    assert any("outside the knot range" in m.message for m in result.messages)


def test_bad_landmark_ids_fail():
    rb = Measurement(0.5, "rb", [1.0, 0.0], np.eye(2) * 0.01, landmark=7)
    result = ProblemValidator(SteamProblem(LtiConstVel(), [0.0, 1.0], n_landmarks=2), MeasurementLog([rb]))
    checked = result.validate_measurements()
    assert not checked.success
    assert checked.messages[0].context == {"ids": [7]}


def test_knot_checks():
    log = MeasurementLog()
    assert not ProblemValidator(SteamProblem(LtiConstVel(), [0.0]), log).validate_knots().success
    assert not ProblemValidator(SteamProblem(LtiConstVel(), [0.0, 2.0, 1.0]), log).validate_knots().success
    assert ProblemValidator(SteamProblem(LtiConstVel(), [0.0], initial_cov=np.eye(6)), log).validate_knots().success


def test_empty_log_warns():
    result = ProblemValidator(SteamProblem(LtiConstVel(), [0.0, 1.0]), MeasurementLog()).validate_measurements()
    assert result.success
    assert _levels(result) == [ResultLevel.WARNING]


def test_result_merge_and_document():
    ok = OperationResult().add_success("knots fine")
    bad = OperationResult().add_error("ids out of range", "7", ids=[7])
    combined = OperationResult().merge([ok, bad])
    assert not combined.success
    assert combined.has_errors() and not combined.has_warnings()
    assert combined.to_dict()["messages"][1] == {
        "level": "error", "message": "ids out of range", "details": "7", "ids": [7],
    }
