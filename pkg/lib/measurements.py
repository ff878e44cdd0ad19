"""
Measurement records, the JSON Lines log format and measurement models.

Kinds:
    odom  wheel odometry (longitudinal speed v, yaw rate omega)
    rb    range/bearing to a landmark
    pose  direct planar pose fix (x, y, theta), a linear model
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from lib.config import CONFIG
from lib.errors import CoincidentLandmark, ConfigError, ParseError, SortOrderError, VersionMismatch
from lib.utils import wrap_angle

logger = logging.getLogger(__name__)

VALUE_DIM = {"odom": 2, "rb": 2, "pose": 3}
BEARING_FRAMES = ("world", "body")


def _upper(cov: np.ndarray) -> List[float]:
    rows, cols = np.triu_indices(cov.shape[0])
    return [float(v) for v in cov[rows, cols]]


def _from_upper(entries: Sequence[float], dim: int) -> np.ndarray:
    rows, cols = np.triu_indices(dim)
    if len(entries) != rows.size:
        raise ValueError(f"expected {rows.size} covariance entries, got {len(entries)}")
    cov = np.zeros((dim, dim))
    cov[rows, cols] = entries
    cov[cols, rows] = entries
    return cov


@dataclass(frozen=True)
class Measurement:
    """One timestamped measurement with its noise covariance."""

    t: float
    kind: str
    value: np.ndarray
    cov: np.ndarray
    landmark: Optional[int] = None

    def __post_init__(self):
        if self.kind not in VALUE_DIM:
            raise ConfigError(f"unknown measurement kind '{self.kind}'")
        dim = VALUE_DIM[self.kind]
        object.__setattr__(self, "value", np.asarray(self.value, dtype=float).reshape(dim))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float).reshape(dim, dim))
        if self.kind == "rb" and self.landmark is None:
            raise ConfigError("range/bearing records need a landmark id")

    def to_record(self) -> dict:
        record = {"t": float(self.t), "kind": self.kind}
        if self.landmark is not None:
            record["lm"] = int(self.landmark)
        record["val"] = [float(v) for v in self.value]
        record["cov"] = _upper(self.cov)
        return record

    @classmethod
    def from_record(cls, record: dict) -> "Measurement":
        kind = record["kind"]
        if kind not in VALUE_DIM:
            raise ValueError(f"unknown kind '{kind}'")
        dim = VALUE_DIM[kind]
        landmark = record.get("lm")
        return cls(
            float(record["t"]),
            kind,
            np.asarray(record["val"], dtype=float),
            _from_upper(record["cov"], dim),
            None if landmark is None else int(landmark),
        )


class MeasurementLog:
    """Time-ordered measurement records."""

    def __init__(self, records: Sequence[Measurement] = ()):
        self.records: List[Measurement] = list(records)
        for i in range(1, len(self.records)):
            if self.records[i].t < self.records[i - 1].t:
                raise SortOrderError("<log>", i, "records out of time order")

    @classmethod
    def from_unsorted(cls, records: Sequence[Measurement]) -> "MeasurementLog":
        return cls(sorted(records, key=lambda m: m.t))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Measurement]:
        return iter(self.records)

    @property
    def times(self) -> np.ndarray:
        return np.array([m.t for m in self.records], dtype=float)

    def by_kind(self, kind: str) -> List[Measurement]:
        return [m for m in self.records if m.kind == kind]

    def count(self, kind: str) -> int:
        return sum(1 for m in self.records if m.kind == kind)

    def without(self, kind: str) -> "MeasurementLog":
        return MeasurementLog([m for m in self.records if m.kind != kind])

    def without_odometry(self) -> "MeasurementLog":
        return self.without("odom")

    def landmark_ids(self) -> List[int]:
        return sorted({m.landmark for m in self.records if m.kind == "rb"})

    def is_linear(self) -> bool:
        return all(m.kind == "pose" for m in self.records)

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps({"format": CONFIG.LOG_FORMAT, "version": CONFIG.LOG_VERSION}) + "\n")
            for m in self.records:
                f.write(json.dumps(m.to_record()) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MeasurementLog":
        path = Path(path)
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise ParseError(path, 1, "missing header line")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as e:
            raise ParseError(path, 1, f"invalid header: {e.msg}") from None
        if not isinstance(header, dict) or header.get("format") != CONFIG.LOG_FORMAT:
            raise ParseError(path, 1, "not a steamgp measurement log")
        if header.get("version") != CONFIG.LOG_VERSION:
            raise VersionMismatch(path, header.get("version"), CONFIG.LOG_VERSION)
        records: List[Measurement] = []
        for number, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                record = Measurement.from_record(json.loads(line))
            except json.JSONDecodeError as e:
                raise ParseError(path, number, f"invalid JSON: {e.msg}") from None
            except (KeyError, TypeError, ValueError, ConfigError) as e:
                raise ParseError(path, number, f"invalid record: {e}") from None
            if records and record.t < records[-1].t:
                raise SortOrderError(path, number, f"time {record.t!r} precedes {records[-1].t!r}")
            records.append(record)
        logger.debug("loaded %d records from %s", len(records), path)
        return cls(records)


# ---------------------------------------------------------------------------
# Measurement models
# ---------------------------------------------------------------------------


def _as_states(states) -> np.ndarray:
    if hasattr(states, "to_vector"):
        states = states.to_vector()
    return np.atleast_2d(np.asarray(states, dtype=float))


def range_bearing_batch(
    states: np.ndarray,
    landmarks: np.ndarray,
    bearing_frame: str = "world",
    landmark_ids: Optional[Sequence[int]] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Range/bearing predictions and Jacobians for M state/landmark pairs.

    Returns:
        y (M, 2), H_x (M, 2, D), H_l (M, 2, 2)
    """
    if bearing_frame not in BEARING_FRAMES:
        raise ConfigError(f"bearing frame must be one of {BEARING_FRAMES}")
    states = np.atleast_2d(states)
    landmarks = np.atleast_2d(np.asarray(landmarks, dtype=float))
    dx = landmarks[:, 0] - states[:, 0]
    dy = landmarks[:, 1] - states[:, 1]
    r2 = dx * dx + dy * dy
    r = np.sqrt(r2)
    close = np.flatnonzero(r < CONFIG.COINCIDENT_RANGE_M)
    if close.size:
        i = int(close[0])
        raise CoincidentLandmark(float(r[i]), None if landmark_ids is None else int(landmark_ids[i]))
    bearing = np.arctan2(dy, dx)
    if bearing_frame == "body":
        bearing = bearing - states[:, 2]
    M, D = states.shape
    y = np.stack([r, wrap_angle(bearing)], axis=1).reshape(M, 2)
    Hx = np.zeros((M, 2, D))
    Hx[:, 0, 0] = -dx / r
    Hx[:, 0, 1] = -dy / r
    Hx[:, 1, 0] = dy / r2
    Hx[:, 1, 1] = -dx / r2
    if bearing_frame == "body":
        Hx[:, 1, 2] = -1.0
    Hl = np.empty((M, 2, 2))
    Hl[:, 0, 0] = dx / r
    Hl[:, 0, 1] = dy / r
    Hl[:, 1, 0] = -dy / r2
    Hl[:, 1, 1] = dx / r2
    return y, Hx, Hl


def measure_range_bearing(state, landmark, bearing_frame: str = "world"):
    """Range and bearing from a robot state to a landmark, with Jacobians.

    Bearing is atan2(l_y - y, l_x - x) in the world frame; the body frame
    variant subtracts the heading.
    """
    y, Hx, Hl = range_bearing_batch(_as_states(state), np.atleast_2d(landmark), bearing_frame)
    return y[0], Hx[0], Hl[0]


def odometry_batch(states: np.ndarray, convention: str) -> Tuple[np.ndarray, np.ndarray]:
    """Odometry predictions (M, 2) and Jacobians (M, 2, D).

    inertial: v = cos(theta) xdot + sin(theta) ydot, omega = thetadot
    body:     v = nu_v, omega = nu_omega
    """
    states = np.atleast_2d(states)
    M, D = states.shape
    H = np.zeros((M, 2, D))
    if convention == "body":
        y = states[:, [3, 5]].copy()
        H[:, 0, 3] = 1.0
        H[:, 1, 5] = 1.0
        return y, H
    c, s = np.cos(states[:, 2]), np.sin(states[:, 2])
    xdot, ydot = states[:, 3], states[:, 4]
    y = np.stack([c * xdot + s * ydot, states[:, 5]], axis=1)
    H[:, 0, 2] = -s * xdot + c * ydot
    H[:, 0, 3] = c
    H[:, 0, 4] = s
    H[:, 1, 5] = 1.0
    return y, H


def measure_odometry(state, kind) -> Tuple[np.ndarray, np.ndarray]:
    """Longitudinal speed and yaw rate for a prior kind (or convention name)."""
    convention = kind if isinstance(kind, str) else kind.velocity_convention
    y, H = odometry_batch(_as_states(state), convention)
    return y[0], H[0]


def pose_batch(states: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    states = np.atleast_2d(states)
    M, D = states.shape
    dof = D // 2
    H = np.zeros((M, dof, D))
    H[:, np.arange(dof), np.arange(dof)] = 1.0
    return states[:, :dof].copy(), H


def measure_pose(state) -> Tuple[np.ndarray, np.ndarray]:
    """Linear pose fix y = [I 0] x."""
    y, H = pose_batch(_as_states(state))
    return y[0], H[0]


def residuals(kind: str, measured: np.ndarray, predicted: np.ndarray) -> np.ndarray:
    """Measured minus predicted; bearings and headings wrapped to (-pi, pi]."""
    r = np.asarray(measured, dtype=float) - np.asarray(predicted, dtype=float)
    if kind == "rb":
        r[..., 1] = wrap_angle(r[..., 1])
    elif kind == "pose" and r.shape[-1] == 3:
        r[..., 2] = wrap_angle(r[..., 2])
    return r


def invert_range_bearing(state: np.ndarray, value: np.ndarray, bearing_frame: str = "world") -> np.ndarray:
    """Landmark position from one range/bearing observation."""
    state = np.asarray(state, dtype=float)
    angle = value[1] + (state[2] if bearing_frame == "body" else 0.0)
    return state[:2] + value[0] * np.array([np.cos(angle), np.sin(angle)])
