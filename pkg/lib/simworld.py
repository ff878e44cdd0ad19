"""
Seeded planar robot worlds.

Samples ground-truth trajectories from a motion prior's SDE, scatters a
landmark forest over the arena, simulates odometry / range-bearing / pose
measurements and reads and writes dataset directories:

    world.json          configuration, dynamics and initial state
    measurements.jsonl  measurement log
    truth.csv           dense ground truth (velocity columns per convention)
    landmarks.csv       id,x,y

Every random draw comes from a labeled substream of the seed, so changing
one sensor setting leaves the trajectory and the other noise draws intact.
"""

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np

from lib.config import CONFIG
from lib.errors import ConfigError, ParseError, SortOrderError, VersionMismatch
from lib.measurements import (
    BEARING_FRAMES,
    Measurement,
    MeasurementLog,
    odometry_batch,
    pose_batch,
    range_bearing_batch,
)
from lib.priors import PRIOR_KINDS, PriorKind, make_prior_kind
from lib.utils import body_to_inertial, ensure_dir, inertial_to_body, uniform_times

logger = logging.getLogger(__name__)

WORLD_FORMAT = "steamgp-world"

# Substream labels
TRAJECTORY_STREAM = 0
LANDMARK_STREAM = 1
ODOMETRY_STREAM = 2
RANGE_BEARING_STREAM = 3
POSE_STREAM = 4


def substream(seed: int, label: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(label)])


@dataclass
class WorldConfig:
    """Simulated world and sensor suite.

    initial_velocity is body-frame (forward speed, lateral speed, yaw rate).
    qc = None uses the prior kind's default spectral density; zero entries
    are allowed here (a noise-free world).
    """

    seed: int = 0
    duration: float = 70.0
    knot_rate: float = 1.0
    landmark_count: int = CONFIG.DEFAULT_LANDMARK_COUNT
    arena_half_extent: float = CONFIG.DEFAULT_ARENA_HALF_EXTENT_M
    odom_rate: float = 1.0
    rb_interval: float = 1.0
    max_range: float = 50.0
    sigma_range: float = CONFIG.SIGMA_RANGE_M
    sigma_bearing: float = CONFIG.SIGMA_BEARING_RAD
    sigma_v: float = CONFIG.SIGMA_V_MPS
    sigma_omega: float = CONFIG.SIGMA_OMEGA_RADPS
    prior: str = "lti"
    qc: Optional[Tuple[float, ...]] = None
    prior_params: Dict[str, float] = field(default_factory=dict)
    bearing_frame: str = "world"
    initial_pose: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    initial_velocity: Tuple[float, float, float] = (0.5, 0.0, 0.05)
    cov_floor: float = CONFIG.COV_FLOOR
    pose_fix_interval: float = 0.0
    sigma_pose_xy: float = 0.05
    sigma_pose_theta: float = 0.01
    truth_step: Optional[float] = None

    def __post_init__(self):
        self.qc = None if self.qc is None else tuple(float(q) for q in self.qc)
        self.initial_pose = tuple(float(v) for v in self.initial_pose)
        self.initial_velocity = tuple(float(v) for v in self.initial_velocity)
        self.prior_params = dict(self.prior_params)
        self.validate()

    def validate(self) -> None:
        problems = []
        if self.duration <= 0:
            problems.append("duration must be positive")
        for name in ("knot_rate", "odom_rate", "rb_interval", "max_range", "arena_half_extent"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        for name in ("sigma_range", "sigma_bearing", "sigma_v", "sigma_omega",
                     "sigma_pose_xy", "sigma_pose_theta", "pose_fix_interval"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be non-negative")
        if self.cov_floor <= 0:
            problems.append("cov_floor must be positive")
        if self.landmark_count < 0:
            problems.append("landmark_count must be non-negative")
        if self.prior not in PRIOR_KINDS:
            problems.append(f"prior must be one of {sorted(PRIOR_KINDS)}")
        if self.qc is not None and any(q < 0 or not math.isfinite(q) for q in self.qc):
            problems.append("qc entries must be finite and non-negative")
        if self.bearing_frame not in BEARING_FRAMES:
            problems.append(f"bearing_frame must be one of {BEARING_FRAMES}")
        if len(self.initial_pose) != 3 or len(self.initial_velocity) != 3:
            problems.append("initial_pose and initial_velocity need 3 entries")
        if self.truth_step is not None and self.truth_step <= 0:
            problems.append("truth_step must be positive")
        if problems:
            raise ConfigError("invalid world config: " + "; ".join(problems))

    @classmethod
    def from_dict(cls, data: Mapping) -> "WorldConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown world config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"invalid world config: {e}") from None

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "WorldConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(path, e.lineno, e.msg) from None
        if not isinstance(data, dict):
            raise ConfigError("world config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["qc"] = None if self.qc is None else list(self.qc)
        data["initial_pose"] = list(self.initial_pose)
        data["initial_velocity"] = list(self.initial_velocity)
        return data

    def kind(self) -> PriorKind:
        """Prior kind for the dynamics (Qc placeholder when qc has zeros)."""
        qc = self.qc if self.qc is not None and all(q > 0 for q in self.qc) else None
        return make_prior_kind(self.prior, qc=qc, **self.prior_params)

    def qc_diag(self) -> np.ndarray:
        if self.qc is None:
            return self.kind().qc_diag
        return np.asarray(self.qc, dtype=float)

    @property
    def step(self) -> float:
        if self.truth_step is not None:
            return self.truth_step
        return 1.0 / (self.knot_rate * CONFIG.TRUTH_SUBSTEPS_PER_KNOT)

    def initial_state(self) -> np.ndarray:
        """Initial state in the dynamics prior's velocity convention."""
        body = np.concatenate([self.initial_pose, self.initial_velocity])
        if self.kind().velocity_convention == "body":
            return body
        return body_to_inertial(body)


@dataclass
class GroundTruth:
    """Densely sampled trajectory plus landmark positions."""

    times: np.ndarray
    states: np.ndarray
    knot_times: np.ndarray
    landmarks: np.ndarray
    convention: str = "inertial"

    @property
    def knot_states(self) -> np.ndarray:
        return self.at(self.knot_times)

    def at(self, t) -> np.ndarray:
        """States at times t; grid hits are exact, other times interpolate linearly."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.clip(np.searchsorted(self.times, t), 0, self.times.size - 1)
        prev = np.maximum(idx - 1, 0)
        nearest = np.where(np.abs(self.times[prev] - t) < np.abs(self.times[idx] - t), prev, idx)
        out = self.states[nearest].copy()
        miss = np.flatnonzero(np.abs(self.times[nearest] - t) > 1e-9)
        if miss.size:
            for j in range(self.states.shape[1]):
                out[miss, j] = np.interp(t[miss], self.times, self.states[:, j])
        return out

    def in_convention(self, convention: str) -> np.ndarray:
        """Dense states with velocities in the requested convention."""
        if convention == self.convention:
            return self.states.copy()
        if convention == "body":
            return inertial_to_body(self.states)
        return body_to_inertial(self.states)

    @property
    def initial_state(self) -> np.ndarray:
        return self.states[0].copy()


def place_landmarks(config: WorldConfig) -> np.ndarray:
    """Uniform landmarks over the arena with a minimum mutual separation."""
    rng = substream(config.seed, LANDMARK_STREAM)
    half = config.arena_half_extent
    sep2 = CONFIG.LANDMARK_MIN_SEPARATION_M**2
    placed = []
    attempts = 0
    while len(placed) < config.landmark_count:
        if attempts >= CONFIG.LANDMARK_MAX_ATTEMPTS:
            raise ConfigError(
                f"could not place {config.landmark_count} landmarks {CONFIG.LANDMARK_MIN_SEPARATION_M} m apart"
            )
        attempts += 1
        candidate = rng.uniform(-half, half, size=2)
        if all(np.sum((candidate - p) ** 2) >= sep2 for p in placed):
            placed.append(candidate)
    return np.array(placed, dtype=float).reshape(-1, 2)


def _psd_sqrt(Q: np.ndarray) -> np.ndarray:
    """Symmetric square roots of PSD blocks (..., D, D); zero blocks are allowed."""
    w, V = np.linalg.eigh(0.5 * (Q + np.swapaxes(Q, -1, -2)))
    return V * np.sqrt(np.clip(w, 0.0, None))[..., None, :]


def _truth_times(config: WorldConfig) -> np.ndarray:
    steps = max(1, int(math.ceil(config.duration / config.step - 1e-9)))
    return config.duration * np.arange(steps + 1) / steps


def sample_trajectory(config: WorldConfig) -> GroundTruth:
    """Sample a ground-truth trajectory from the configured prior's SDE.

    Linear priors use exact discrete sampling x_k+1 = Phi x_k + N(0, Q_k);
    the body-frame prior uses Euler-Maruyama at the truth step.
    """
    kind = config.kind()
    qc = config.qc_diag()
    rng = substream(config.seed, TRAJECTORY_STREAM)
    times = _truth_times(config)
    dt = np.diff(times)
    D = kind.state_dim
    states = np.empty((times.size, D))
    states[0] = config.initial_state()
    xi = rng.standard_normal((dt.size, D))
    if kind.is_linear:
        keys, inverse = np.unique(np.round(dt, 12), return_inverse=True)
        trans = kind.transitions(keys)
        roots = _psd_sqrt(kind.noise(keys, qc=qc))
        inverse = inverse.ravel()
        for k in range(dt.size):
            j = inverse[k]
            states[k + 1] = trans[j] @ states[k] + roots[j] @ xi[k]
    else:
        dof = kind.dof
        scale = np.sqrt(qc)
        for k in range(dt.size):
            x = states[k]
            nxt = x + kind.dynamics(x[None])[0] * dt[k]
            nxt[dof:] += scale * math.sqrt(dt[k]) * xi[k, dof:]
            states[k + 1] = nxt
    knot_times = uniform_times(0.0, config.duration, config.knot_rate)
    if config.duration - knot_times[-1] > CONFIG.MIN_INTERVAL_S:
        knot_times = np.append(knot_times, config.duration)
    truth = GroundTruth(times, states, knot_times, place_landmarks(config), kind.velocity_convention)
    logger.debug("sampled %d truth states with the %s prior", times.size, kind.name)
    return truth


def sensor_times(config: WorldConfig) -> Dict[str, np.ndarray]:
    """Measurement epochs per kind; none at t=0 and none past the duration."""
    out = {
        "odom": uniform_times(0.0, config.duration, config.odom_rate)[1:],
        "rb": config.rb_interval * np.arange(1, int(math.floor(config.duration / config.rb_interval + 1e-9)) + 1),
    }
    if config.pose_fix_interval > 0:
        count = int(math.floor(config.duration / config.pose_fix_interval + 1e-9))
        out["pose"] = config.pose_fix_interval * np.arange(1, count + 1)
    return out


def _noise_cov(sigmas, floor: float) -> np.ndarray:
    return np.diag(np.maximum(np.square(np.asarray(sigmas, dtype=float)), floor))


def generate_measurements(truth: GroundTruth, config: WorldConfig) -> MeasurementLog:
    """Noisy odometry, range/bearing (within max_range) and optional pose fixes."""
    epochs = sensor_times(config)
    records = []

    t = epochs["odom"]
    if t.size:
        rng = substream(config.seed, ODOMETRY_STREAM)
        y, _ = odometry_batch(truth.at(t), truth.convention)
        sig = np.array([config.sigma_v, config.sigma_omega])
        y = y + sig * rng.standard_normal(y.shape)
        cov = _noise_cov(sig, config.cov_floor)
        records.extend(Measurement(float(ti), "odom", yi, cov) for ti, yi in zip(t, y))

    t = epochs["rb"]
    L = truth.landmarks.shape[0]
    if t.size and L:
        rng = substream(config.seed, RANGE_BEARING_STREAM)
        sig = np.array([config.sigma_range, config.sigma_bearing])
        cov = _noise_cov(sig, config.cov_floor)
        states = truth.at(t)
        ids = np.arange(L)
        for ti, state in zip(t, states):
            noise = sig * rng.standard_normal((L, 2))
            dist = np.hypot(truth.landmarks[:, 0] - state[0], truth.landmarks[:, 1] - state[1])
            visible = ids[(dist <= config.max_range) & (dist >= CONFIG.COINCIDENT_RANGE_M)]
            if not visible.size:
                continue
            y, _, _ = range_bearing_batch(
                np.repeat(state[None], visible.size, axis=0),
                truth.landmarks[visible],
                config.bearing_frame,
                visible,
            )
            y = y + noise[visible]
            records.extend(
                Measurement(float(ti), "rb", yi, cov, int(lm)) for lm, yi in zip(visible, y)
            )

    t = epochs.get("pose", np.zeros(0))
    if t.size:
        rng = substream(config.seed, POSE_STREAM)
        sig = np.array([config.sigma_pose_xy, config.sigma_pose_xy, config.sigma_pose_theta])
        y, _ = pose_batch(truth.at(t))
        y = y + sig * rng.standard_normal(y.shape)
        cov = _noise_cov(sig, config.cov_floor)
        records.extend(Measurement(float(ti), "pose", yi, cov) for ti, yi in zip(t, y))

    log = MeasurementLog(sorted(records, key=lambda m: (m.t, m.kind, -1 if m.landmark is None else m.landmark)))
    logger.debug("generated %d measurements", len(log))
    return log


@dataclass
class Dataset:
    config: WorldConfig
    truth: GroundTruth
    log: MeasurementLog


def simulate(config: WorldConfig) -> Dataset:
    truth = sample_trajectory(config)
    return Dataset(config, truth, generate_measurements(truth, config))


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    return repr(float(value))


def save_truth(truth: GroundTruth, path: Union[str, Path]) -> None:
    names = CONFIG.VELOCITY_COLUMNS[truth.convention]
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(
            f"# format={CONFIG.TRUTH_FORMAT} version={CONFIG.TRUTH_VERSION} "
            f"velocity={truth.convention} columns={','.join(names)}\n"
        )
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["t", "x", "y", "theta", *names])
        for t, row in zip(truth.times, truth.states):
            writer.writerow([_fmt(t), *(_fmt(v) for v in row)])


def _parse_header_comment(path: Path, line: str) -> Dict[str, str]:
    if not line.startswith("#"):
        raise ParseError(path, 1, "missing format comment")
    meta = {}
    for part in line[1:].split():
        key, _, value = part.partition("=")
        meta[key] = value
    if meta.get("format") != CONFIG.TRUTH_FORMAT:
        raise ParseError(path, 1, "not a steamgp ground-truth file")
    try:
        version = int(meta.get("version", ""))
    except ValueError:
        raise ParseError(path, 1, "invalid version field") from None
    if version != CONFIG.TRUTH_VERSION:
        raise VersionMismatch(path, version, CONFIG.TRUTH_VERSION)
    if meta.setdefault("velocity", "none") not in (*CONFIG.VELOCITY_COLUMNS, "none"):
        raise ParseError(path, 1, "unknown velocity convention")
    return meta


def load_truth_table(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray, str]:
    """Read a truth CSV: (times, states (T, 6), velocity convention).

    A pose-only table (velocity=none, columns t,x,y,theta) yields NaN
    velocities and the inertial convention.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = f.read().splitlines()
    if not lines:
        raise ParseError(path, 1, "empty file")
    meta = _parse_header_comment(path, lines[0])
    convention = meta["velocity"]
    expected = ["t", "x", "y", "theta", *CONFIG.VELOCITY_COLUMNS.get(convention, ())]
    if len(lines) < 2 or [c.strip() for c in lines[1].split(",")] != expected:
        raise ParseError(path, 2, f"expected header {','.join(expected)}")
    rows = []
    for number, row in enumerate(csv.reader(lines[2:]), start=3):
        if not row:
            continue
        if len(row) != len(expected):
            raise ParseError(path, number, f"expected {len(expected)} columns, got {len(row)}")
        try:
            values = [float(v) for v in row]
        except ValueError as e:
            raise ParseError(path, number, str(e)) from None
        if rows and values[0] <= rows[-1][0]:
            raise SortOrderError(path, number, "times must be strictly increasing")
        rows.append(values)
    if not rows:
        raise ParseError(path, len(lines) + 1, "no rows")
    table = np.array(rows, dtype=float)
    if convention == "none":
        states = np.full((table.shape[0], 6), np.nan)
        states[:, :3] = table[:, 1:]
        return table[:, 0], states, "inertial"
    return table[:, 0], table[:, 1:], convention


def save_landmarks(landmarks: np.ndarray, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["id", "x", "y"])
        for i, (x, y) in enumerate(landmarks):
            writer.writerow([i, _fmt(x), _fmt(y)])


def load_landmarks(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    if not rows or [c.strip() for c in rows[0]] != ["id", "x", "y"]:
        raise ParseError(path, 1, "expected header id,x,y")
    out = []
    for number, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            lm_id, x, y = int(row[0]), float(row[1]), float(row[2])
        except (ValueError, IndexError) as e:
            raise ParseError(path, number, f"invalid landmark row: {e}") from None
        if lm_id != len(out):
            raise ParseError(path, number, f"landmark ids must run 0..L-1, got {lm_id}")
        out.append((x, y))
    return np.array(out, dtype=float).reshape(-1, 2)


def save_dataset(dataset: Dataset, directory: Union[str, Path]) -> Path:
    """Write world.json, measurements.jsonl, truth.csv and landmarks.csv."""
    directory = ensure_dir(directory)
    files = CONFIG.DATASET_FILES
    world = {
        "format": WORLD_FORMAT,
        "version": CONFIG.WORLD_VERSION,
        "config": dataset.config.to_dict(),
        "dynamics": dataset.config.kind().to_dict(),
        "velocity_convention": dataset.truth.convention,
        "initial_state": [float(v) for v in dataset.truth.initial_state],
        "knot_times": [float(t) for t in dataset.truth.knot_times],
    }
    with open(directory / files["world"], "w", encoding="utf-8") as f:
        json.dump(world, f, indent=2)
    dataset.log.save(directory / files["log"])
    save_truth(dataset.truth, directory / files["truth"])
    save_landmarks(dataset.truth.landmarks, directory / files["landmarks"])
    logger.info("wrote dataset to %s", directory)
    return directory


def load_world(path: Union[str, Path]) -> dict:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            world = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(path, e.lineno, e.msg) from None
    if not isinstance(world, dict) or world.get("format") != WORLD_FORMAT:
        raise ParseError(path, 1, "not a steamgp world file")
    if world.get("version") != CONFIG.WORLD_VERSION:
        raise VersionMismatch(path, world.get("version"), CONFIG.WORLD_VERSION)
    return world


def load_dataset(directory: Union[str, Path]) -> Dataset:
    """Read a dataset directory written by save_dataset."""
    directory = Path(directory)
    files = CONFIG.DATASET_FILES
    world = load_world(directory / files["world"])
    config = WorldConfig.from_dict(world["config"])
    times, states, convention = load_truth_table(directory / files["truth"])
    landmarks = load_landmarks(directory / files["landmarks"])
    truth = GroundTruth(
        times, states, np.asarray(world["knot_times"], dtype=float), landmarks, convention
    )
    log = MeasurementLog.load(directory / files["log"])
    return Dataset(config, truth, log)
