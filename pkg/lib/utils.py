"""
Shared helpers for steamgp tools.

Angle wrapping, planar rotations, slope fitting and argument parsing.
"""

from pathlib import Path
from typing import Iterable, List, Sequence, Union

import numpy as np


def wrap_angle(angle):
    """Wrap angles to (-pi, pi]."""
    wrapped = np.mod(np.asarray(angle, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def rotation(theta):
    """Planar pose rotation R(theta) acting on (x, y, theta) rates.

    Accepts a scalar or an array of angles; returns (3, 3) or (..., 3, 3).
    """
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    R = np.zeros(theta.shape + (3, 3))
    R[..., 0, 0] = c
    R[..., 0, 1] = -s
    R[..., 1, 0] = s
    R[..., 1, 1] = c
    R[..., 2, 2] = 1.0
    return R


def body_to_inertial(states: np.ndarray) -> np.ndarray:
    """Convert [pose; body velocity] rows to [pose; pose rate] rows."""
    states = np.asarray(states, dtype=float)
    out = states.copy()
    out[..., 3:6] = np.einsum("...ij,...j->...i", rotation(states[..., 2]), states[..., 3:6])
    return out


def inertial_to_body(states: np.ndarray) -> np.ndarray:
    """Convert [pose; pose rate] rows to [pose; body velocity] rows."""
    states = np.asarray(states, dtype=float)
    out = states.copy()
    Rt = np.swapaxes(rotation(states[..., 2]), -1, -2)
    out[..., 3:6] = np.einsum("...ij,...j->...i", Rt, states[..., 3:6])
    return out


def loglog_slope(sizes: Sequence[float], times: Sequence[float]) -> float:
    """Least-squares slope of log(time) against log(size)."""
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.maximum(np.asarray(times, dtype=float), 1e-12))
    if len(x) < 2:
        return float("nan")
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def parse_number_list(text: str, cast=float) -> List:
    """Parse '1,2,3' (whitespace tolerant) into a list."""
    return [cast(part) for part in text.replace(" ", "").split(",") if part]


def parse_times(text: str) -> np.ndarray:
    """Parse query times from a comma list or a CSV file (first column)."""
    path = Path(text)
    if path.suffix.lower() in (".csv", ".txt") and path.exists():
        values: List[float] = []
        for line in path.read_text(encoding="utf-8").splitlines():
            cell = line.split(",")[0].strip()
            if not cell or cell.startswith("#"):
                continue
            try:
                values.append(float(cell))
            except ValueError:
                continue  # header row
        return np.asarray(values, dtype=float)
    return np.asarray(parse_number_list(text), dtype=float)


def uniform_times(start: float, stop: float, rate_hz: float) -> np.ndarray:
    """Times start, start+1/rate, ... up to and including stop."""
    count = int(np.floor((stop - start) * rate_hz + 1e-9))
    return start + np.arange(count + 1) / rate_hz


def ensure_dir(path: Union[str, Path]) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def symmetrize(blocks: np.ndarray) -> np.ndarray:
    return 0.5 * (blocks + np.swapaxes(blocks, -1, -2))


def iter_chunks(count: int, size: int) -> Iterable[slice]:
    for start in range(0, count, size):
        yield slice(start, min(start + size, count))
