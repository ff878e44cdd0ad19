"""Shared fixtures and builders for the steamgp tests."""

import numpy as np
import pytest

from lib.blocklin import ArrowheadSystem, BlockTridiagonalSystem
from lib.measurements import Measurement, MeasurementLog
from lib.simworld import WorldConfig, save_dataset, simulate


def random_block_tridiag(rng: np.random.Generator, n: int, d: int) -> BlockTridiagonalSystem:
    """SPD block-tridiagonal W = B B^T from a random lower block-bidiagonal B."""
    B_diag = np.tril(rng.normal(scale=0.3, size=(n, d, d))) + 2.0 * np.eye(d)
    B_off = rng.normal(scale=0.5, size=(n - 1, d, d))
    diag = B_diag @ np.swapaxes(B_diag, 1, 2)
    diag[1:] += B_off @ np.swapaxes(B_off, 1, 2)
    offdiag = B_off @ np.swapaxes(B_diag[:-1], 1, 2)
    return BlockTridiagonalSystem(diag, offdiag, rng.normal(size=n * d))


def random_arrowhead(
    rng: np.random.Generator, n: int, d: int, n_landmarks: int, sightings: int
) -> ArrowheadSystem:
    """Arrowhead system shaped like STEAM normal equations (prior + G^T G)."""
    traj = random_block_tridiag(rng, n, d)
    lm_diag = np.broadcast_to(0.5 * np.eye(2), (n_landmarks, 2, 2)).copy()
    coupling = {}
    for _ in range(sightings):
        i = int(rng.integers(n_landmarks))
        k = int(rng.integers(n))
        Hx = rng.normal(size=(2, d))
        Hl = rng.normal(size=(2, 2))
        traj.diag[k] += Hx.T @ Hx
        lm_diag[i] += Hl.T @ Hl
        coupling[(i, k)] = coupling.get((i, k), 0.0) + Hl.T @ Hx
    return ArrowheadSystem.from_map(traj, lm_diag, coupling, rng.normal(size=2 * n_landmarks))


def pose_log(times, values, sigma: float = 0.1) -> MeasurementLog:
    cov = sigma**2 * np.eye(3)
    return MeasurementLog([Measurement(float(t), "pose", v, cov) for t, v in zip(times, values)])


def small_world(**overrides) -> WorldConfig:
    """A short body-frame world circling among five landmarks."""
    data = {
        "seed": 3,
        "duration": 20.0,
        "landmark_count": 5,
        "arena_half_extent": 8.0,
        "prior": "ntv",
        "qc": [0.01, 0.01, 0.005],
        "initial_pose": [0.0, -4.0, 0.0],
        "initial_velocity": [0.5, 0.0, 0.1],
    }
    data.update(overrides)
    return WorldConfig.from_dict(data)


def noiseless_world(**overrides) -> WorldConfig:
    """Straight constant-velocity truth with exact measurements."""
    data = {
        "seed": 5,
        "duration": 15.0,
        "landmark_count": 6,
        "prior": "lti",
        "qc": [0.0, 0.0, 0.0],
        "sigma_range": 0.0,
        "sigma_bearing": 0.0,
        "sigma_v": 0.0,
        "sigma_omega": 0.0,
        "initial_pose": [-3.0, -2.0, 0.1],
        "initial_velocity": [0.4, 0.0, 0.02],
    }
    data.update(overrides)
    return WorldConfig.from_dict(data)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    return simulate(small_world())


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory, small_dataset):
    return save_dataset(small_dataset, tmp_path_factory.mktemp("data") / "small")


@pytest.fixture(scope="session")
def noiseless_dir(tmp_path_factory):
    return save_dataset(simulate(noiseless_world()), tmp_path_factory.mktemp("data") / "noiseless")
