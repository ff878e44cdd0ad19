"""
steamgp library modules.

Sparse Gaussian-process trajectory estimation: block-tridiagonal linear
algebra, motion priors, O(1) interpolation, the Gauss-Newton estimator,
hyperparameter training and the simulated worlds behind the tools.
"""

__all__ = [
    "CONFIG",
    "OperationResult",
    "ResultLevel",
    "ResultMessage",
    "SteamError",
    "ProblemValidator",
    "ProblemState",
    "BlockTridiagonalSystem",
    "ArrowheadSystem",
    "chol_block_tridiag",
    "chol_arrowhead",
    "inverse_blocks",
    "PriorKind",
    "LtiConstVel",
    "NtvBodyConstVel",
    "Matern32",
    "make_prior_kind",
    "build_prior",
    "query",
    "Measurement",
    "MeasurementLog",
    "SteamProblem",
    "ConvergenceConfig",
    "SolveReport",
    "solve",
    "solve_dense",
    "TrainingSet",
    "TrainConfig",
    "train",
    "WorldConfig",
    "simulate",
    "load_dataset",
]

# Import main exports for convenience
from lib.config import CONFIG
from lib.errors import SteamError
from lib.results import (
    OperationResult,
    ResultLevel,
    ResultMessage,
)
from lib.blocklin import (
    ArrowheadSystem,
    BlockTridiagonalSystem,
    chol_arrowhead,
    chol_block_tridiag,
    inverse_blocks,
)
from lib.priors import (
    LtiConstVel,
    Matern32,
    NtvBodyConstVel,
    PriorKind,
    build_prior,
    make_prior_kind,
)
from lib.gpinterp import query
from lib.measurements import Measurement, MeasurementLog
from lib.estimator import ConvergenceConfig, SolveReport, SteamProblem, solve
from lib.baseline import solve_dense
from lib.validation import ProblemValidator, ProblemState
from lib.hypertrain import TrainConfig, TrainingSet, train
from lib.simworld import WorldConfig, load_dataset, simulate
