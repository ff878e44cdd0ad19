"""
Hyperparameter training for the motion prior's spectral density Qc.

Maximizes the log marginal likelihood of full-state ground-truth
observations y = x(t_w) + n_w, n_w ~ N(0, sigma_w^2 I):

    log p(y | Qc) = -1/2 r^T P_w^-1 r - 1/2 log|P_w| - n/2 log(2 pi)

with r = y - x_prior and P_w = P + sigma_w^2 I. The inverse goes through
the Woodbury identity around the block-tridiagonal A = P^-1 + sigma_w^-2 I,
so evaluation and both gradient terms run in time linear in W. The "fast"
mode drops the observation noise (P_w = P), which biases Qc upwards.

Qc is optimized over its log-diagonal. The first training state anchors the
prior: it is held fixed unless an initial variance is configured.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import fmin_l_bfgs_b

from lib.blocklin import chol_block_tridiag, inverse_blocks, solve as block_solve
from lib.config import CONFIG
from lib.errors import ConfigError, DimensionMismatch, NonMonotonicTimes, NotConverged, NotPositiveDefinite
from lib.priors import OperatingTrajectory, PriorFactorization, PriorKind, build_prior, substeps_for
from lib.simworld import GroundTruth, load_truth_table
from lib.utils import body_to_inertial, inertial_to_body, symmetrize, uniform_times

logger = logging.getLogger(__name__)

MODES = ("exact", "fast")
OPTIMIZERS = ("ascent", "lbfgs")


@dataclass
class TrainingSet:
    """Full-state observations of a trajectory, sorted by time on construction."""

    times: np.ndarray
    states: np.ndarray
    obs_var: float = 0.0
    convention: str = "inertial"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2 or states.shape[0] != times.size:
            raise DimensionMismatch(f"states {states.shape} do not match {times.size} times")
        if times.size < 2:
            raise ConfigError("training needs at least two observations")
        if self.obs_var < 0:
            raise ConfigError("observation variance must be non-negative")
        order = np.argsort(times, kind="stable")
        self.times = times[order]
        self.states = states[order]
        dup = np.flatnonzero(np.diff(self.times) <= 0)
        if dup.size:
            raise NonMonotonicTimes(int(dup[0]) + 1)

    def __len__(self) -> int:
        return self.times.size

    @property
    def size(self) -> int:
        return self.states.size

    def in_convention(self, convention: str) -> "TrainingSet":
        if convention == self.convention:
            return self
        convert = inertial_to_body if convention == "body" else body_to_inertial
        return replace(self, states=convert(self.states), convention=convention)

    @classmethod
    def from_truth(
        cls,
        source,
        kind: PriorKind,
        rate_hz: Optional[float] = None,
        obs_var: float = 0.0,
        noise_seed: Optional[int] = None,
    ) -> "TrainingSet":
        """Training data from a ground-truth CSV path or a GroundTruth.

        Missing velocity columns are finite-differenced from the poses.
        rate_hz subsamples the truth; noise_seed adds N(0, obs_var) noise.
        """
        if isinstance(source, GroundTruth):
            times, states, convention = source.times, source.states, source.convention
        else:
            times, states, convention = load_truth_table(source)
        states = np.array(states, dtype=float)
        if np.isnan(states[:, 3:]).any():
            states[:, 3:] = np.gradient(states[:, :3], times, axis=0)
            convention = "inertial"
        if rate_hz is not None:
            sample = uniform_times(times[0], times[-1], rate_hz)
            states = np.column_stack([np.interp(sample, times, states[:, j]) for j in range(states.shape[1])])
            times = sample
        if noise_seed is not None and obs_var > 0:
            rng = np.random.default_rng(noise_seed)
            states = states + math.sqrt(obs_var) * rng.standard_normal(states.shape)
        training = cls(times, states, obs_var, convention)
        return training.in_convention(kind.velocity_convention)


@dataclass
class TrainConfig:
    mode: str = "exact"
    optimizer: str = "ascent"
    max_iters: int = CONFIG.TRAIN_MAX_ITERS
    grad_tol: float = CONFIG.TRAIN_GRAD_TOL
    initial_step: float = CONFIG.TRAIN_INITIAL_STEP
    min_step: float = CONFIG.TRAIN_MIN_STEP
    initial_var: Optional[float] = None
    raise_on_failure: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if self.grad_tol <= 0 or self.initial_step <= 0 or self.max_iters < 1:
            raise ConfigError("tolerance, step and iteration limit must be positive")
        if self.initial_var is not None and self.initial_var <= 0:
            raise ConfigError("initial variance must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LikelihoodTerms:
    lml: float
    quadratic: float
    logdet: float
    gradient: Optional[np.ndarray] = None


class TrainingModel:
    """Prior at the training times with the noise basis cached.

    Qn is linear in Qc, so a new Qc only rescales the basis; transitions and
    the prior mean stay fixed (the body-frame prior is linearized once about
    the training states).
    """

    def __init__(
        self,
        kind: PriorKind,
        training: TrainingSet,
        initial_var: Optional[float] = None,
        step: Optional[float] = None,
    ):
        if training.states.shape[1] != kind.state_dim:
            raise DimensionMismatch(
                f"training states have {training.states.shape[1]} entries, prior state has {kind.state_dim}"
            )
        self.kind = kind
        self.training = training.in_convention(kind.velocity_convention)
        y = self.training.states
        times = self.training.times
        op = None
        if not kind.is_linear:
            op = OperatingTrajectory.from_knots(times, y, substeps_for(float(np.diff(times).max()), step))
        locked = initial_var is None
        p0 = None if locked else initial_var * np.eye(kind.state_dim)
        self.prior = build_prior(kind, times, op_traj=op, x0=y[0], p0=p0, lock_first=locked, step=step)
        self.basis = self.prior.noise_basis()
        self.start = 1 if locked else 0
        self.y = y
        self.residual = y[self.start :] - self.prior.mean[self.start :]

    @property
    def n_obs(self) -> int:
        return self.residual.size

    @property
    def obs_var(self) -> float:
        return self.training.obs_var

    def prior_at(self, qc: Sequence[float]) -> PriorFactorization:
        kind = self.kind.with_qc(qc)
        q = symmetrize(np.einsum("i,inab->nab", kind.qc_diag, self.basis))
        return replace(self.prior, kind=kind, q=q, qinv=symmetrize(np.linalg.inv(q)))

    def _prior_logdet(self, prior: PriorFactorization) -> float:
        sign, logdet = np.linalg.slogdet(prior.q)
        if np.any(sign <= 0):
            raise NotPositiveDefinite(int(np.flatnonzero(sign <= 0)[0]) + 1, "noise", "Qn not positive definite")
        total = float(np.sum(logdet))
        if not prior.locked:
            total += float(np.linalg.slogdet(prior.p0)[1])
        return total

    def _woodbury(self, prior: PriorFactorization, obs_var: float):
        A = prior.inverse_kernel()
        A.diag += np.eye(prior.state_dim) / obs_var
        return chol_block_tridiag(A)

    def apply_pw_inverse(self, v: np.ndarray, qc=None, obs_var: Optional[float] = None) -> np.ndarray:
        """P_w^-1 v over the free training states."""
        prior = self.prior_at(self.kind.qc_diag if qc is None else qc)
        obs_var = self.obs_var if obs_var is None else obs_var
        v = np.asarray(v, dtype=float)
        if obs_var == 0:
            return prior.inverse_kernel().matvec(v)
        chol = self._woodbury(prior, obs_var)
        return v / obs_var - block_solve(chol, v) / obs_var**2

    def evaluate(self, qc: Sequence[float], mode: str = "exact", gradient: bool = True) -> LikelihoodTerms:
        """Log marginal likelihood and (optionally) its gradient w.r.t. the Qc diagonal."""
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        prior = self.prior_at(qc)
        s = self.start
        n = self.n_obs
        obs_var = 0.0 if mode == "fast" else self.obs_var
        logdet = self._prior_logdet(prior)

        if obs_var == 0:
            e = prior.residuals(self.y)
            quad = 2.0 * prior.cost(self.y)
            chol = None
        else:
            chol = self._woodbury(prior, obs_var)
            r = self.residual.ravel()
            alpha = r / obs_var - block_solve(chol, r) / obs_var**2
            quad = float(r @ alpha)
            logdet += chol.logdet() + n * math.log(obs_var)
        lml = -0.5 * quad - 0.5 * logdet - 0.5 * n * math.log(2.0 * math.pi)
        if not gradient:
            return LikelihoodTerms(lml, quad, logdet)

        # Per noise block n (knot n + 1): beta = (F^T alpha) at that knot and
        # M = (F^T P_w^-1 F) diagonal block.
        qinv = prior.qinv
        if chol is None:
            beta = np.einsum("nij,nj->ni", qinv, e[1:])
            M = qinv
        else:
            D = prior.state_dim
            a = alpha.reshape(-1, D)
            b = np.empty_like(a)
            b[-1] = a[-1]
            for j in range(a.shape[0] - 2, -1, -1):
                b[j] = a[j] + prior.trans[j + s].T @ b[j + 1]
            beta = b[1 - s :]
            S = inverse_blocks(chol)
            T = np.empty_like(qinv)
            for k in range(prior.n_intervals):
                j = k + 1 - s
                if j == 0:
                    T[k] = S.diag[0]
                    continue
                Phi = prior.trans[k]
                cross = Phi @ S.offdiag[j - 1].T
                T[k] = S.diag[j] - cross - cross.T + Phi @ S.diag[j - 1] @ Phi.T
            M = qinv - qinv @ T @ qinv
        quad_grad = np.einsum("ni,knij,nj->k", beta, self.basis, beta)
        trace_grad = np.einsum("nij,knji->k", M, self.basis)
        grad = 0.5 * quad_grad - 0.5 * trace_grad
        return LikelihoodTerms(lml, quad, logdet, grad)


def log_marginal_likelihood(
    kind: PriorKind,
    training: TrainingSet,
    qc: Optional[Sequence[float]] = None,
    mode: str = "exact",
    initial_var: Optional[float] = None,
) -> float:
    model = TrainingModel(kind, training, initial_var)
    return model.evaluate(kind.qc_diag if qc is None else qc, mode, gradient=False).lml


def lml_gradient(
    kind: PriorKind,
    training: TrainingSet,
    qc: Optional[Sequence[float]] = None,
    mode: str = "exact",
    initial_var: Optional[float] = None,
    log_space: bool = False,
) -> np.ndarray:
    """Gradient over the Qc diagonal (or its logarithm with log_space)."""
    qc = np.asarray(kind.qc_diag if qc is None else qc, dtype=float)
    grad = TrainingModel(kind, training, initial_var).evaluate(qc, mode).gradient
    return grad * qc if log_space else grad


def apply_pw_inverse(model: TrainingModel, v: np.ndarray, qc=None) -> np.ndarray:
    return model.apply_pw_inverse(v, qc)


@dataclass
class TrainResult:
    qc: np.ndarray
    mode: str
    optimizer: str
    iterations: int
    final_lml: float
    converged: bool
    trace: List[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "entries": [float(q) for q in self.qc],
            "mode": self.mode,
            "iterations": self.iterations,
            "final_lml": float(self.final_lml),
            "optimizer": self.optimizer,
            "converged": self.converged,
        }

    def save(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    @staticmethod
    def load_entries(path: Union[str, Path]) -> List[float]:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        try:
            return [float(q) for q in data["entries"]]
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{path}: expected a JSON document with an 'entries' list") from None


def _ascent(model: TrainingModel, x: np.ndarray, config: TrainConfig):
    """Gradient ascent in log space; the step halves until the objective improves."""
    qc = np.exp(x)
    terms = model.evaluate(qc, config.mode)
    g = terms.gradient * qc
    trace = [{"iteration": 0, "qc": qc.tolist(), "lml": terms.lml, "grad_norm": float(np.max(np.abs(g)))}]
    step = config.initial_step
    converged = False
    iterations = 0
    while iterations < config.max_iters:
        gnorm = float(np.max(np.abs(g)))
        if gnorm < config.grad_tol:
            converged = True
            break
        direction = g / gnorm
        while step >= config.min_step:
            candidate = x + step * direction
            try:
                cand = model.evaluate(np.exp(candidate), config.mode)
            except NotPositiveDefinite:
                step *= 0.5
                continue
            if cand.lml > terms.lml:
                break
            step *= 0.5
        if step < config.min_step:
            logger.debug("line search stalled at lml %.6f", terms.lml)
            converged = float(np.max(np.abs(g))) < config.grad_tol
            break
        x, terms = candidate, cand
        qc = np.exp(x)
        g = terms.gradient * qc
        iterations += 1
        trace.append(
            {"iteration": iterations, "qc": qc.tolist(), "lml": terms.lml,
             "grad_norm": float(np.max(np.abs(g))), "step": step}
        )
        logger.debug("train iteration %d: lml %.6f, |g| %.3e", iterations, terms.lml, trace[-1]["grad_norm"])
        step = min(2.0 * step, 1.0)
    else:
        converged = float(np.max(np.abs(g))) < config.grad_tol
    return x, terms.lml, iterations, converged, trace


def _lbfgs(model: TrainingModel, x: np.ndarray, config: TrainConfig):
    trace: List[dict] = []

    def objective(z):
        qc = np.exp(z)
        try:
            terms = model.evaluate(qc, config.mode)
        except NotPositiveDefinite:
            return np.inf, np.zeros_like(z)
        trace.append({"iteration": len(trace), "qc": qc.tolist(), "lml": terms.lml})
        return -terms.lml, -terms.gradient * qc

    x_opt, f_opt, info = fmin_l_bfgs_b(
        objective, x, maxiter=config.max_iters, pgtol=config.grad_tol
    )
    return x_opt, -float(f_opt), int(info["nit"]), info["warnflag"] == 0, trace


def train(
    kind: PriorKind,
    training: TrainingSet,
    config: Optional[TrainConfig] = None,
    step: Optional[float] = None,
) -> TrainResult:
    """Fit the Qc diagonal by maximizing the log marginal likelihood.

    Starts from kind.qc. Raises NotConverged carrying the best iterate when
    the iteration limit is reached.
    """
    config = config or TrainConfig()
    model = TrainingModel(kind, training, config.initial_var, step)
    x0 = np.log(kind.qc_diag)
    run = _ascent if config.optimizer == "ascent" else _lbfgs
    x, lml, iterations, converged, trace = run(model, x0, config)
    result = TrainResult(np.exp(x), config.mode, config.optimizer, iterations, lml, converged, trace)
    if converged:
        logger.info("trained Qc %s after %d iterations (lml %.6f)", np.round(result.qc, 6).tolist(), iterations, lml)
    else:
        logger.warning("training stopped after %d iterations without converging", iterations)
        if config.raise_on_failure:
            raise NotConverged(result, iterations)
    return result
