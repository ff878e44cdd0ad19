import json

import numpy as np
import pytest

from lib.errors import CoincidentLandmark, ConfigError, ParseError, SortOrderError, VersionMismatch
from lib.measurements import (
    Measurement,
    MeasurementLog,
    invert_range_bearing,
    measure_odometry,
    measure_pose,
    measure_range_bearing,
    residuals,
)
from lib.priors import LtiConstVel, NtvBodyConstVel


def _numeric_jacobian(fn, x, eps=1e-7):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx[i] = eps
        cols.append((fn(x + dx) - fn(x - dx)) / (2 * eps))
    return np.stack(cols, axis=-1)


@pytest.mark.parametrize("frame", ["world", "body"])
def test_range_bearing_jacobians(frame):
    state = np.array([1.0, -2.0, 0.7, 0.3, 0.1, 0.05])
    landmark = np.array([4.0, 1.5])
    y, Hx, Hl = measure_range_bearing(state, landmark, frame)
    assert y[0] == pytest.approx(np.hypot(3.0, 3.5))
    np.testing.assert_allclose(Hx, _numeric_jacobian(lambda s: measure_range_bearing(s, landmark, frame)[0], state), atol=1e-7)
    np.testing.assert_allclose(Hl, _numeric_jacobian(lambda l: measure_range_bearing(state, l, frame)[0], landmark), atol=1e-7)


@pytest.mark.parametrize("kind", [LtiConstVel(), NtvBodyConstVel()], ids=["inertial", "body"])
def test_odometry_jacobian(kind):
    state = np.array([0.0, 0.0, 0.9, 0.4, 0.2, -0.1])
    y, H = measure_odometry(state, kind)
    assert y[1] == pytest.approx(-0.1)
    np.testing.assert_allclose(H, _numeric_jacobian(lambda s: measure_odometry(s, kind)[0], state), atol=1e-7)


def test_odometry_conventions_agree_on_forward_motion():
    theta = 0.4
    inertial = np.array([0.0, 0.0, theta, 2.0 * np.cos(theta), 2.0 * np.sin(theta), 0.1])
    body = np.array([0.0, 0.0, theta, 2.0, 0.0, 0.1])
    np.testing.assert_allclose(measure_odometry(inertial, "inertial")[0], measure_odometry(body, "body")[0])


def test_pose_model_is_linear():
    y, H = measure_pose(np.arange(6.0))
    np.testing.assert_array_equal(y, [0.0, 1.0, 2.0])
    np.testing.assert_array_equal(H, np.hstack([np.eye(3), np.zeros((3, 3))]))


def test_coincident_landmark():
    with pytest.raises(CoincidentLandmark):
        measure_range_bearing(np.array([1.0, 1.0, 0.0, 0, 0, 0]), np.array([1.0, 1.0]))


def test_bearing_residual_wraps():
    r = residuals("rb", np.array([[1.0, np.pi - 0.01]]), np.array([[1.0, -np.pi + 0.01]]))
    assert r[0, 1] == pytest.approx(-0.02)
    r = residuals("pose", np.array([0.0, 0.0, -3.1]), np.array([0.0, 0.0, 3.1]))
    assert r[2] == pytest.approx(2 * np.pi - 6.2)


@pytest.mark.parametrize("frame", ["world", "body"])
def test_invert_range_bearing(frame):
    state = np.array([1.0, 2.0, -0.5, 0, 0, 0])
    landmark = np.array([-3.0, 4.0])
    y, _, _ = measure_range_bearing(state, landmark, frame)
    np.testing.assert_allclose(invert_range_bearing(state, y, frame), landmark, atol=1e-12)


def test_measurement_checks():
    with pytest.raises(ConfigError):
        Measurement(0.0, "gps", [0, 0], np.eye(2))
    with pytest.raises(ConfigError):
        Measurement(0.0, "rb", [1, 0], np.eye(2))
    with pytest.raises(SortOrderError):
        MeasurementLog([Measurement(1.0, "odom", [0, 0], np.eye(2)), Measurement(0.5, "odom", [0, 0], np.eye(2))])


def test_log_round_trip(tmp_path):
    log = MeasurementLog.from_unsorted([
        Measurement(2.0, "pose", [1, 2, 3], np.diag([0.1, 0.1, 0.01])),
        Measurement(1.0, "rb", [5.0, 0.2], np.array([[0.01, 0.001], [0.001, 0.02]]), landmark=4),
        Measurement(1.0, "odom", [0.5, 0.05], np.eye(2) * 1e-4),
    ])
    path = tmp_path / "log.jsonl"
    log.save(path)
    header, first = path.read_text().splitlines()[:2]
    assert json.loads(header) == {"format": "steamgp-log", "version": 1}
    assert json.loads(first)["cov"] == [0.01, 0.001, 0.02]
    loaded = MeasurementLog.load(path)
    assert [m.kind for m in loaded] == ["rb", "odom", "pose"]
    assert loaded.landmark_ids() == [4]
    for a, b in zip(log, loaded):
        assert a.t == b.t and a.landmark == b.landmark
        np.testing.assert_array_equal(a.value, b.value)
        np.testing.assert_array_equal(a.cov, b.cov)


def _write(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return path


def test_log_parse_errors(tmp_path):
    header = json.dumps({"format": "steamgp-log", "version": 1})
    odom = lambda t: json.dumps({"t": t, "kind": "odom", "val": [0, 0], "cov": [1, 0, 1]})

    with pytest.raises(VersionMismatch) as info:
        MeasurementLog.load(_write(tmp_path / "v2.jsonl", [json.dumps({"format": "steamgp-log", "version": 2})]))
    assert info.value.found == 2

    with pytest.raises(SortOrderError) as info:
        MeasurementLog.load(_write(tmp_path / "order.jsonl", [header, odom(2.0), odom(1.0)]))
    assert info.value.line == 3

    with pytest.raises(ParseError) as info:
        MeasurementLog.load(_write(tmp_path / "json.jsonl", [header, odom(1.0), "{not json"]))
    assert info.value.line == 3

    with pytest.raises(ParseError):
        MeasurementLog.load(_write(tmp_path / "cov.jsonl", [header, '{"t": 1, "kind": "odom", "val": [0, 0], "cov": [1]}']))

    with pytest.raises(ParseError) as info:
        MeasurementLog.load(_write(tmp_path / "other.jsonl", ['{"format": "csv"}']))
    assert info.value.line == 1
