"""
Configuration constants for sparse GP trajectory estimation.

Centralizes tolerances, integration settings, file-format identifiers and
simulator defaults.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Tuple


@dataclass(frozen=True)
class SolverConfig:
    """Configuration shared by the solver, simulator and tools."""

    # Block Cholesky
    PIVOT_RTOL: float = 1e-12

    # Priors
    MIN_INTERVAL_S: float = 1e-9
    INTEGRATION_STEP_S: float = 0.05
    INTEGRATION_MIN_SUBSTEPS: int = 20
    DEFAULT_DOF: int = 3
    RESAMPLE_CHUNK: int = 2048

    # Gauss-Newton
    MAX_ITERS: int = 50
    REL_COST_TOL: float = 1e-6
    STEP_TOL: float = 1e-8
    COINCIDENT_RANGE_M: float = 1e-9

    # Hyperparameter training
    TRAIN_MAX_ITERS: int = 200
    TRAIN_GRAD_TOL: float = 1e-4
    TRAIN_INITIAL_STEP: float = 0.1
    TRAIN_MIN_STEP: float = 1e-8

    # File formats
    LOG_FORMAT: str = "steamgp-log"
    LOG_VERSION: int = 1
    TRUTH_FORMAT: str = "steamgp-truth"
    TRUTH_VERSION: int = 1
    WORLD_VERSION: int = 1
    REPORT_VERSION: int = 1
    TRAJECTORY_VERSION: int = 1

    # Dataset file names
    DATASET_FILES: Dict[str, str] = field(
        default_factory=lambda: {
            "world": "world.json",
            "log": "measurements.jsonl",
            "truth": "truth.csv",
            "landmarks": "landmarks.csv",
        }
    )

    # Tools
    DEFAULT_QUERY_RATE_HZ: float = 10.0
    DENSE_BASELINE_MAX_N: int = 800
    THREADS_ENV_VAR: str = "STEAMGP_THREADS"
    BENCH_QUERIES: int = 200

    # Simulator defaults
    DEFAULT_LANDMARK_COUNT: int = 17
    DEFAULT_ARENA_HALF_EXTENT_M: float = 10.0
    LANDMARK_MIN_SEPARATION_M: float = 0.5
    LANDMARK_MAX_ATTEMPTS: int = 100000
    TRUTH_SUBSTEPS_PER_KNOT: int = 100
    SIGMA_RANGE_M: float = 0.05
    SIGMA_BEARING_RAD: float = math.radians(0.5)
    SIGMA_V_MPS: float = 0.02
    SIGMA_OMEGA_RADPS: float = 0.01
    COV_FLOOR: float = 1e-10
    DEFAULT_QC: Tuple[float, float, float] = (0.1, 0.1, 0.05)

    # Velocity column names per convention
    VELOCITY_COLUMNS: Dict[str, Tuple[str, str, str]] = field(
        default_factory=lambda: {
            "inertial": ("xdot", "ydot", "thetadot"),
            "body": ("v", "u", "omega"),
        }
    )


# Global config instance
CONFIG = SolverConfig()
