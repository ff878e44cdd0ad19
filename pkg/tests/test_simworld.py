import json

import numpy as np
import pytest

from conftest import noiseless_world, small_world
from lib.errors import ConfigError, ParseError, SortOrderError, VersionMismatch
from lib.measurements import MeasurementLog
from lib.simworld import (
    WorldConfig,
    load_dataset,
    load_landmarks,
    load_truth_table,
    place_landmarks,
    sample_trajectory,
    save_dataset,
    sensor_times,
    simulate,
    substream,
)
from lib.utils import body_to_inertial


def _values(log: MeasurementLog, kind: str) -> np.ndarray:
    return np.array([m.value for m in log.by_kind(kind)])


def test_same_seed_same_world():
    a = simulate(small_world())
    b = simulate(small_world())
    np.testing.assert_array_equal(a.truth.states, b.truth.states)
    np.testing.assert_array_equal(a.truth.landmarks, b.truth.landmarks)
    assert len(a.log) == len(b.log)
    for ma, mb in zip(a.log, b.log):
        assert ma.t == mb.t and ma.kind == mb.kind and ma.landmark == mb.landmark
        np.testing.assert_array_equal(ma.value, mb.value)


def test_different_seed_different_world():
    a = sample_trajectory(small_world(seed=1))
    b = sample_trajectory(small_world(seed=2))
    assert not np.allclose(a.states[-1], b.states[-1])


def test_substreams_are_independent():
    base = simulate(small_world())
    noisier = simulate(small_world(sigma_range=0.5))
    np.testing.assert_array_equal(base.truth.states, noisier.truth.states)
    np.testing.assert_array_equal(_values(base.log, "odom"), _values(noisier.log, "odom"))
    assert not np.allclose(_values(base.log, "rb")[:, 0], _values(noisier.log, "rb")[:, 0])

    sparser = simulate(small_world(rb_interval=2.0))
    np.testing.assert_array_equal(_values(base.log, "odom"), _values(sparser.log, "odom"))
    assert substream(3, 0).standard_normal() != substream(3, 1).standard_normal()


def test_landmarks_are_separated_and_inside_arena():
    landmarks = place_landmarks(WorldConfig(seed=9, landmark_count=40, arena_half_extent=5.0))
    assert landmarks.shape == (40, 2)
    assert np.all(np.abs(landmarks) <= 5.0)
    gaps = np.linalg.norm(landmarks[:, None] - landmarks[None], axis=-1)
    np.fill_diagonal(gaps, np.inf)
    assert gaps.min() >= 0.5


def test_landmark_placement_can_fail():
    with pytest.raises(ConfigError):
        place_landmarks(WorldConfig(landmark_count=50, arena_half_extent=0.5))


def test_sensor_times():
    epochs = sensor_times(WorldConfig(duration=10.0, odom_rate=2.0, rb_interval=2.5, pose_fix_interval=4.0))
    np.testing.assert_allclose(epochs["odom"], 0.5 * np.arange(1, 21))
    np.testing.assert_allclose(epochs["rb"], [2.5, 5.0, 7.5, 10.0])
    np.testing.assert_allclose(epochs["pose"], [4.0, 8.0])
    assert "pose" not in sensor_times(WorldConfig(duration=10.0))


def test_knot_times_cover_duration():
    truth = sample_trajectory(small_world(duration=5.5))
    np.testing.assert_allclose(truth.knot_times, [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 5.5])
    assert truth.times[0] == 0.0 and truth.times[-1] == 5.5


def test_max_range_limits_sightings():
    dataset = simulate(noiseless_world(max_range=6.0))
    rb = dataset.log.by_kind("rb")
    assert rb
    for m in rb:
        state = dataset.truth.at(m.t)[0]
        distance = np.hypot(*(dataset.truth.landmarks[m.landmark] - state[:2]))
        assert distance <= 6.0
        assert m.value[0] == pytest.approx(distance, abs=1e-9)


def test_zero_qc_world_moves_in_a_straight_line():
    config = noiseless_world()
    truth = sample_trajectory(config)
    x0 = body_to_inertial(np.concatenate([config.initial_pose, config.initial_velocity]))
    expected = x0[:3] + truth.times[:, None] * x0[3:]
    np.testing.assert_allclose(truth.states[:, :3], expected, atol=1e-9)
    np.testing.assert_allclose(truth.states[:, 3:], np.broadcast_to(x0[3:], (truth.times.size, 3)), atol=1e-12)


def test_dataset_round_trip(tmp_path, small_dataset):
    directory = save_dataset(small_dataset, tmp_path / "world")
    assert sorted(p.name for p in directory.iterdir()) == [
        "landmarks.csv", "measurements.jsonl", "truth.csv", "world.json",
    ]
    loaded = load_dataset(directory)
    assert loaded.config == small_dataset.config
    assert loaded.truth.convention == "body"
    np.testing.assert_array_equal(loaded.truth.states, small_dataset.truth.states)
    np.testing.assert_array_equal(loaded.truth.knot_times, small_dataset.truth.knot_times)
    np.testing.assert_array_equal(loaded.truth.landmarks, small_dataset.truth.landmarks)
    assert len(loaded.log) == len(small_dataset.log)
    world = json.loads((directory / "world.json").read_text())
    assert world["dynamics"]["name"] == "ntv"


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown world config keys"):
        WorldConfig.from_dict({"seed": 1, "speed": 2.0})
    with pytest.raises(ConfigError):
        WorldConfig(duration=-1.0)
    with pytest.raises(ConfigError):
        WorldConfig(prior="spline")
    with pytest.raises(ConfigError):
        WorldConfig(qc=(0.1, -0.1, 0.1))
    bad = tmp_path / "world.json"
    bad.write_text("{ nope")
    with pytest.raises(ParseError):
        WorldConfig.from_file(bad)


def _truth_file(path, header, rows):
    path.write_text("\n".join([header, *rows]) + "\n")
    return path


def test_truth_file_errors(tmp_path):
    comment = "# format=steamgp-truth version=1 velocity=inertial columns=xdot,ydot,thetadot"
    columns = "t,x,y,theta,xdot,ydot,thetadot"
    with pytest.raises(ParseError):
        load_truth_table(_truth_file(tmp_path / "a.csv", columns, ["0,0,0,0,0,0,0"]))
    with pytest.raises(VersionMismatch):
        load_truth_table(_truth_file(tmp_path / "b.csv", comment.replace("version=1", "version=3"), [columns]))
    with pytest.raises(ParseError) as info:
        load_truth_table(_truth_file(tmp_path / "c.csv", comment, [columns, "0,0,0,0,0,0"]))
    assert info.value.line == 3
    with pytest.raises(SortOrderError):
        load_truth_table(_truth_file(tmp_path / "d.csv", comment, [columns, "1,0,0,0,0,0,0", "1,0,0,0,0,0,0"]))


def test_pose_only_truth_has_nan_velocities(tmp_path):
    path = _truth_file(
        tmp_path / "poses.csv",
        "# format=steamgp-truth version=1 velocity=none",
        ["t,x,y,theta", "0.0,1.0,2.0,0.5", "1.0,1.5,2.0,0.5"],
    )
    times, states, convention = load_truth_table(path)
    assert convention == "inertial"
    np.testing.assert_array_equal(times, [0.0, 1.0])
    assert np.isnan(states[:, 3:]).all()
    np.testing.assert_array_equal(states[1, :3], [1.5, 2.0, 0.5])


def test_landmark_ids_must_be_contiguous(tmp_path):
    path = tmp_path / "landmarks.csv"
    path.write_text("id,x,y\n0,1.0,2.0\n2,3.0,4.0\n")
    with pytest.raises(ParseError) as info:
        load_landmarks(path)
    assert info.value.line == 3


def test_rb_epochs_over_nominal_horizon():
    config = WorldConfig(duration=70.0, rb_interval=7.0, landmark_count=4, max_range=1000.0)
    epochs = sensor_times(config)["rb"]
    assert epochs.size == 10
    assert epochs[-1] == pytest.approx(70.0)
    log = simulate(config).log
    assert len({m.t for m in log.by_kind("rb")}) == 10


@pytest.mark.slow
def test_lti_increments_match_process_noise():
    config = WorldConfig(seed=21, duration=1000.0, prior="lti", qc=(0.5, 0.2, 0.1), truth_step=0.02, landmark_count=0)
    truth = sample_trajectory(config)
    kind = config.kind()
    dt = np.diff(truth.times)
    np.testing.assert_allclose(dt, 0.02, rtol=1e-9)
    Phi = kind.transitions(dt[:1])[0]
    Q = kind.noise(dt[:1], qc=config.qc_diag())[0]
    increments = truth.states[1:] - truth.states[:-1] @ Phi.T
    assert increments.shape[0] == 50000
    empirical = np.cov(increments, rowvar=False)
    scale = np.sqrt(np.outer(np.diag(Q), np.diag(Q)))
    np.testing.assert_allclose(np.diag(empirical), np.diag(Q), rtol=0.03)
    assert np.all(np.abs(empirical - Q) <= 0.03 * scale)


@pytest.mark.slow
def test_range_noise_matches_configured_sigma():
    config = WorldConfig(
        seed=8,
        duration=500.0,
        rb_interval=0.5,
        landmark_count=17,
        max_range=1000.0,
        prior="lti",
        qc=(0.0, 0.0, 0.0),
        initial_velocity=(0.02, 0.0, 0.0),
        sigma_range=0.05,
    )
    dataset = simulate(config)
    sightings = dataset.log.by_kind("rb")
    assert len(sightings) > 15000
    t = np.array([m.t for m in sightings])
    ids = np.array([m.landmark for m in sightings])
    measured = np.array([m.value[0] for m in sightings])
    position = dataset.truth.at(t)[:, :2]
    true_range = np.linalg.norm(dataset.truth.landmarks[ids] - position, axis=1)
    error = measured - true_range
    assert abs(float(np.mean(error))) < 3 * 0.05 / np.sqrt(error.size)
    assert float(np.std(error)) == pytest.approx(0.05, rel=0.03)
