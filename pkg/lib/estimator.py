"""
Batch Gauss-Newton trajectory and landmark estimation.

Every iteration solves the arrowhead normal equations

    (P^-1 + G^T R^-1 G) dx = F^-T Q^-1 (v - F^-1 x_op) + G^T R^-1 (y - g)

in time linear in the number of knots, then updates x_op. Measurements that
fall between knots enter through the GP interpolation coefficients of their
bracketing knots, so the trajectory block stays block-tridiagonal.
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from lib.blocklin import ArrowheadSystem, InverseBlocks, chol_arrowhead, inverse_blocks, solve as block_solve
from lib.config import CONFIG
from lib.errors import ConfigError, DimensionMismatch, NotConverged, ParseError, VersionMismatch
from lib.gpinterp import interpolate_grid, keytime_measurement_matrices, query, query_mean
from lib.measurements import (
    BEARING_FRAMES,
    MeasurementLog,
    invert_range_bearing,
    odometry_batch,
    pose_batch,
    range_bearing_batch,
    residuals,
)
from lib.priors import (
    KnotState,
    OperatingTrajectory,
    PriorFactorization,
    PriorKind,
    build_prior,
    make_prior_kind,
    substeps_for,
)
from lib.utils import ensure_dir, uniform_times

logger = logging.getLogger(__name__)


@dataclass
class ConvergenceConfig:
    """Gauss-Newton stopping rule and damping."""

    max_iters: int = CONFIG.MAX_ITERS
    rel_cost_tol: float = CONFIG.REL_COST_TOL
    step_tol: float = CONFIG.STEP_TOL
    lm_lambda: float = 0.0
    raise_on_failure: bool = True

    def __post_init__(self):
        if self.max_iters < 1 or self.rel_cost_tol <= 0 or self.step_tol <= 0 or self.lm_lambda < 0:
            raise ConfigError(f"invalid convergence settings: {self}")

    @classmethod
    def from_dict(cls, data: Mapping) -> "ConvergenceConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown convergence keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SteamProblem:
    """Everything the solver needs besides the measurements.

    knot_times are the estimation times: every measurement time (plus the
    start) in all-knots mode, or uniform keytimes. Knot 0 is locked to
    initial_state unless initial_cov is given.
    """

    kind: PriorKind
    knot_times: np.ndarray
    n_landmarks: int = 0
    keytime_spacing: Optional[float] = None
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    bearing_frame: str = "world"
    initial_state: Optional[np.ndarray] = None
    initial_cov: Optional[np.ndarray] = None
    initial_guess: str = "prior"
    integration_step: Optional[float] = None

    def __post_init__(self):
        self.knot_times = np.asarray(self.knot_times, dtype=float)
        if self.bearing_frame not in BEARING_FRAMES:
            raise ConfigError(f"bearing frame must be one of {BEARING_FRAMES}")
        if self.initial_guess not in ("prior", "odometry"):
            raise ConfigError("initial guess must be 'prior' or 'odometry'")
        if self.initial_state is None:
            self.initial_state = np.zeros(self.kind.state_dim)
        self.initial_state = np.asarray(self.initial_state, dtype=float)

    @property
    def locked(self) -> bool:
        return self.initial_cov is None

    @classmethod
    def for_log(
        cls,
        kind: PriorKind,
        log: MeasurementLog,
        start_time: float = 0.0,
        end_time: Optional[float] = None,
        keytime_spacing: Optional[float] = None,
        n_landmarks: Optional[int] = None,
        **kwargs,
    ) -> "SteamProblem":
        """Derive knot times from the log (all-knots) or a keytime spacing."""
        times = log.times
        end = float(times.max()) if end_time is None and times.size else end_time
        end = start_time if end is None else max(end, start_time)
        if keytime_spacing is None:
            knots = np.unique(np.concatenate([[start_time], times]))
            if end > knots[-1]:
                knots = np.append(knots, end)
        else:
            if keytime_spacing <= 0:
                raise ConfigError("keytime spacing must be positive")
            knots = uniform_times(start_time, end, 1.0 / keytime_spacing)
            if end - knots[-1] > CONFIG.MIN_INTERVAL_S:
                knots = np.append(knots, end)
        if n_landmarks is None:
            ids = log.landmark_ids()
            n_landmarks = (max(ids) + 1) if ids else 0
        return cls(kind, knots, n_landmarks, keytime_spacing, **kwargs)


@dataclass
class MeasurementGroup:
    """Linearized measurements of one kind.

    Each measurement touches knot idx (block A) and, when it falls between
    knots, knot idx + 1 (block B). lm is the landmark row or -1.
    """

    kind: str
    idx: np.ndarray
    has_next: np.ndarray
    A: np.ndarray
    B: np.ndarray
    Hl: np.ndarray
    lm: np.ndarray
    r: np.ndarray
    Rinv: np.ndarray

    def cost(self) -> float:
        return 0.5 * float(np.einsum("mi,mij,mj->", self.r, self.Rinv, self.r))


@dataclass
class LinearizedMeasurements:
    groups: List[MeasurementGroup]

    def cost(self) -> float:
        return sum(g.cost() for g in self.groups)


@dataclass
class _Bracket:
    """Cached interpolation data for the records of one kind."""

    t: np.ndarray
    idx: np.ndarray
    exact: np.ndarray
    lam: np.ndarray
    psi: np.ndarray
    prior_mean: np.ndarray


def _brackets(prior: PriorFactorization, t: np.ndarray) -> _Bracket:
    times = prior.times
    D = prior.state_dim
    idx = np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 1)
    exact = np.abs(times[idx] - t) <= CONFIG.MIN_INTERVAL_S
    lam = np.broadcast_to(np.eye(D), (t.size, D, D)).copy()
    psi = np.zeros((t.size, D, D))
    mean = prior.mean[idx].copy()
    for m in np.flatnonzero(~exact):
        c = keytime_measurement_matrices(prior, times, float(t[m]))
        idx[m] = c.indices[0]
        lam[m], psi[m], mean[m] = c.lam, c.psi, c.prior_mean
    return _Bracket(t, idx, exact, lam, psi, mean)


class _MeasurementModel:
    """Measurement records in array form, ready for batched linearization."""

    def __init__(self, log: MeasurementLog, landmark_rows: Mapping[int, int], problem: SteamProblem):
        self.problem = problem
        self.kinds: Dict[str, dict] = {}
        for kind in ("odom", "rb", "pose"):
            records = log.by_kind(kind)
            if not records:
                continue
            self.kinds[kind] = {
                "t": np.array([m.t for m in records]),
                "y": np.array([m.value for m in records]),
                "Rinv": np.linalg.inv(np.array([m.cov for m in records])),
                "lm": np.array(
                    [landmark_rows[m.landmark] if kind == "rb" else -1 for m in records], dtype=int
                ),
                "ids": np.array([m.landmark if kind == "rb" else -1 for m in records], dtype=int),
            }
        self._brackets: Dict[str, _Bracket] = {}
        self._prior: Optional[PriorFactorization] = None

    def brackets(self, prior: PriorFactorization) -> Dict[str, _Bracket]:
        if self._prior is not prior:
            self._brackets = {k: _brackets(prior, v["t"]) for k, v in self.kinds.items()}
            self._prior = prior
        return self._brackets

    def linearize(
        self, prior: PriorFactorization, knots: np.ndarray, landmarks: np.ndarray
    ) -> LinearizedMeasurements:
        groups = []
        for kind, data in self.kinds.items():
            br = self.brackets(prior)[kind]
            idx = br.idx
            nxt = np.minimum(idx + 1, knots.shape[0] - 1)
            interp = br.prior_mean + np.einsum(
                "mij,mj->mi", br.lam, knots[idx] - prior.mean[idx]
            ) + np.einsum("mij,mj->mi", br.psi, knots[nxt] - prior.mean[nxt])
            states = np.where(br.exact[:, None], knots[idx], interp)
            M = idx.size
            Hl = np.zeros((M, data["y"].shape[1], 2))
            if kind == "rb":
                g, Hx, Hl = range_bearing_batch(
                    states, landmarks[data["lm"]], self.problem.bearing_frame, data["ids"]
                )
            elif kind == "odom":
                g, Hx = odometry_batch(states, prior.kind.velocity_convention)
            else:
                g, Hx = pose_batch(states)
            r = residuals(kind, data["y"], g)
            A = np.where(br.exact[:, None, None], Hx, Hx @ br.lam)
            B = np.where(br.exact[:, None, None], 0.0, Hx @ br.psi)
            groups.append(
                MeasurementGroup(kind, idx, ~br.exact, A, B, Hl, data["lm"], r, data["Rinv"])
            )
        return LinearizedMeasurements(groups)


def assemble_system(
    prior: PriorFactorization,
    linearized: LinearizedMeasurements,
    knots: np.ndarray,
    n_landmarks: int = 0,
    lm_lambda: float = 0.0,
) -> Tuple[ArrowheadSystem, float]:
    """Normal equations about (knots, landmarks) and the current cost.

    The prior contributes P^-1 and F^-T Q^-1 (v - F^-1 x_op); each
    measurement adds G^T R^-1 G and G^T R^-1 (y - g). A locked first knot is
    eliminated from the returned system.

    Returns:
        (ArrowheadSystem over the free variables, cost)
    """
    knots = np.asarray(knots, dtype=float)
    if knots.shape != (prior.n_knots, prior.state_dim):
        raise DimensionMismatch(f"knots shape {knots.shape} does not match the prior")
    traj = prior.normal_equations(knots)
    cost = prior.cost(knots) + linearized.cost()
    K1, D = prior.n_knots, prior.state_dim
    rhs = traj.rhs.reshape(K1, D)
    lm_diag = np.zeros((n_landmarks, 2, 2))
    rhs_lm = np.zeros((n_landmarks, 2))
    c_index: List[np.ndarray] = []
    c_blocks: List[np.ndarray] = []

    for g in linearized.groups:
        RA = g.Rinv @ g.A
        np.add.at(traj.diag, g.idx, np.swapaxes(g.A, 1, 2) @ RA)
        Rr = np.einsum("mij,mj->mi", g.Rinv, g.r)
        np.add.at(rhs, g.idx, np.einsum("mji,mj->mi", g.A, Rr))
        two = np.flatnonzero(g.has_next)
        if two.size:
            B = g.B[two]
            n = g.idx[two]
            RB = g.Rinv[two] @ B
            np.add.at(traj.diag, n + 1, np.swapaxes(B, 1, 2) @ RB)
            np.add.at(traj.offdiag, n, np.swapaxes(B, 1, 2) @ RA[two])
            np.add.at(rhs, n + 1, np.einsum("mji,mj->mi", B, Rr[two]))
        rows = np.flatnonzero(g.lm >= 0)
        if rows.size:
            Hl = g.Hl[rows]
            HlT = np.swapaxes(Hl, 1, 2)
            lm = g.lm[rows]
            np.add.at(lm_diag, lm, HlT @ g.Rinv[rows] @ Hl)
            np.add.at(rhs_lm, lm, np.einsum("mji,mj->mi", Hl, Rr[rows]))
            c_index.append(np.stack([lm, g.idx[rows]], axis=1))
            c_blocks.append(HlT @ RA[rows])
            both = rows[g.has_next[rows]]
            if both.size:
                c_index.append(np.stack([g.lm[both], g.idx[both] + 1], axis=1))
                c_blocks.append(np.swapaxes(g.Hl[both], 1, 2) @ g.Rinv[both] @ g.B[both])

    traj.rhs = rhs.ravel()
    index = np.concatenate(c_index) if c_index else np.zeros((0, 2), dtype=int)
    blocks = np.concatenate(c_blocks) if c_blocks else np.zeros((0, 2, D))
    if prior.locked:
        traj = traj.drop_first()
        keep = index[:, 1] > 0
        index = index[keep] - np.array([0, 1])
        blocks = blocks[keep]
    if lm_lambda > 0:
        traj.diag += lm_lambda * np.eye(D)
        lm_diag += lm_lambda * np.eye(2)
    system = ArrowheadSystem(traj, lm_diag, index, blocks, rhs_lm.ravel())
    return system, cost


@dataclass
class SolveReport:
    """Converged (or last) iterate with posterior blocks and diagnostics."""

    times: np.ndarray
    knots: np.ndarray
    landmarks: Dict[int, np.ndarray]
    cov: Optional[InverseBlocks]
    landmark_cov: Dict[int, np.ndarray]
    cost_history: List[float]
    step_norms: List[float]
    iteration_times: List[float]
    prior_build_times: List[float]
    converged: bool
    iterations: int
    prior: PriorFactorization

    @property
    def kind(self) -> PriorKind:
        return self.prior.kind

    def knot_states(self) -> List[KnotState]:
        convention = self.kind.velocity_convention
        return [KnotState.from_vector(x, convention) for x in self.knots]

    def query(self, taus: Sequence[float]) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """Posterior means and covariances at arbitrary times."""
        return query(self.prior, self.knots, self.cov, taus)

    def summary(self) -> dict:
        return {
            "version": CONFIG.REPORT_VERSION,
            "prior": self.kind.to_dict(),
            "converged": self.converged,
            "iterations": self.iterations,
            "knots": int(self.times.size),
            "cost_history": [float(c) for c in self.cost_history],
            "step_norms": [float(s) for s in self.step_norms],
            "iteration_times_s": [float(s) for s in self.iteration_times],
            "prior_build_times_s": [float(s) for s in self.prior_build_times],
            "landmarks": {str(k): [float(v) for v in xy] for k, xy in self.landmarks.items()},
            "locked_first_knot": self.prior.locked,
        }

    def save(self, directory: Union[str, Path]) -> Path:
        """Write report.json and solution.npz (enough to answer queries later)."""
        directory = ensure_dir(directory)
        with open(directory / "report.json", "w", encoding="utf-8") as f:
            json.dump(self.summary(), f, indent=2)
        prior = self.prior
        arrays = {
            "times": self.times,
            "knots": self.knots,
            "cov_diag": self.cov.diag,
            "cov_offdiag": self.cov.offdiag,
            "trans": prior.trans,
            "q": prior.q,
            "qinv": prior.qinv,
            "offset": prior.offset,
            "mean": prior.mean,
            "x0": prior.x0,
            "p0": np.zeros((0, 0)) if prior.p0 is None else prior.p0,
            "op_grid": np.zeros((0, 0, 0)) if prior.op_traj is None else prior.op_traj.grid,
            "step": np.array([np.nan if prior.step is None else prior.step]),
            "landmark_ids": np.array(sorted(self.landmarks), dtype=int),
            "landmark_cov": np.array([self.landmark_cov[k] for k in sorted(self.landmark_cov)]).reshape(-1, 2, 2),
        }
        np.savez(directory / "solution.npz", **arrays)
        return directory

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "SolveReport":
        directory = Path(directory)
        report_path = directory / "report.json"
        try:
            with open(report_path, "r", encoding="utf-8") as f:
                meta = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(report_path, e.lineno, e.msg) from None
        if meta.get("version") != CONFIG.REPORT_VERSION:
            raise VersionMismatch(report_path, meta.get("version"), CONFIG.REPORT_VERSION)
        params = dict(meta["prior"])
        name = params.pop("name")
        kind = make_prior_kind(name, **params)
        with np.load(directory / "solution.npz") as data:
            arrays = {k: data[k] for k in data.files}
        op = None
        if arrays["op_grid"].size:
            op = OperatingTrajectory(arrays["times"], arrays["op_grid"])
        step = float(arrays["step"][0])
        prior = PriorFactorization(
            kind,
            arrays["times"],
            arrays["trans"],
            arrays["q"],
            arrays["qinv"],
            arrays["offset"],
            arrays["mean"],
            arrays["x0"],
            arrays["p0"] if arrays["p0"].size else None,
            op,
            None if np.isnan(step) else step,
        )
        ids = [int(i) for i in arrays["landmark_ids"]]
        landmarks = {int(k): np.asarray(v, dtype=float) for k, v in meta["landmarks"].items()}
        return cls(
            arrays["times"],
            arrays["knots"],
            landmarks,
            InverseBlocks(arrays["cov_diag"], arrays["cov_offdiag"], arrays["landmark_cov"]),
            {i: arrays["landmark_cov"][j] for j, i in enumerate(ids)},
            meta["cost_history"],
            meta["step_norms"],
            meta["iteration_times_s"],
            meta["prior_build_times_s"],
            meta["converged"],
            meta["iterations"],
            prior,
        )


def _odometry_guess(problem: SteamProblem, log: MeasurementLog) -> np.ndarray:
    """Dead-reckon wheel odometry from the first knot to every knot time."""
    times = problem.knot_times
    convention = problem.kind.velocity_convention
    odom = log.by_kind("odom")
    t_odom = np.array([m.t for m in odom])
    values = np.array([m.value for m in odom]).reshape(-1, 2)
    knots = np.zeros((times.size, problem.kind.state_dim))
    x = problem.initial_state.copy()
    knots[0] = x
    for k in range(1, times.size):
        dt = times[k] - times[k - 1]
        if t_odom.size:
            j = int(np.clip(np.searchsorted(t_odom, times[k], side="right") - 1, 0, t_odom.size - 1))
            v, w = values[j]
        else:
            v, w = 0.0, 0.0
        theta = x[2]
        x = x.copy()
        x[0] += v * np.cos(theta) * dt
        x[1] += v * np.sin(theta) * dt
        x[2] += w * dt
        if convention == "body":
            x[3:] = (v, 0.0, w)
        else:
            x[3:] = (v * np.cos(x[2]), v * np.sin(x[2]), w)
        knots[k] = x
    return knots


def _initial_landmarks(
    prior: PriorFactorization,
    knots: np.ndarray,
    log: MeasurementLog,
    ids: Sequence[int],
    bearing_frame: str,
) -> np.ndarray:
    """First-observation inverse projection for every observed landmark."""
    first: Dict[int, object] = {}
    for m in log.by_kind("rb"):
        first.setdefault(m.landmark, m)
    out = np.zeros((len(ids), 2))
    for row, lm_id in enumerate(ids):
        m = first[lm_id]
        state = query_mean(prior, knots, m.t)
        out[row] = invert_range_bearing(state, m.value, bearing_frame)
    return out


def _build(problem: SteamProblem, op_traj=None) -> PriorFactorization:
    return build_prior(
        problem.kind,
        problem.knot_times,
        op_traj=op_traj,
        x0=problem.initial_state,
        p0=problem.initial_cov,
        lock_first=problem.locked,
        step=problem.integration_step,
    )


class SparseBackend:
    """Arrowhead Cholesky solves in time linear in the number of knots."""

    name = "sparse"

    def step(
        self,
        prior: PriorFactorization,
        linearized: LinearizedMeasurements,
        knots: np.ndarray,
        n_landmarks: int,
        lm_lambda: float = 0.0,
    ) -> np.ndarray:
        system, _ = assemble_system(prior, linearized, knots, n_landmarks, lm_lambda)
        return block_solve(chol_arrowhead(system), system.rhs)

    def covariance(
        self,
        prior: PriorFactorization,
        linearized: LinearizedMeasurements,
        knots: np.ndarray,
        n_landmarks: int,
    ) -> InverseBlocks:
        """Posterior blocks over all knots; a locked knot 0 gets zero blocks."""
        system, _ = assemble_system(prior, linearized, knots, n_landmarks)
        blocks = inverse_blocks(chol_arrowhead(system))
        if not prior.locked:
            return blocks
        D = prior.state_dim
        zero = np.zeros((1, D, D))
        return InverseBlocks(
            np.concatenate([zero, blocks.diag]),
            np.concatenate([zero, blocks.offdiag]),
            blocks.landmarks,
        )


IterationCallback = Callable[[int, np.ndarray, np.ndarray], None]


def solve(
    problem: SteamProblem,
    log: MeasurementLog,
    landmarks_init: Optional[Mapping[int, Sequence[float]]] = None,
    backend=None,
    callback: Optional[IterationCallback] = None,
) -> SolveReport:
    """Gauss-Newton over the whole trajectory and all observed landmarks.

    Args:
        problem: Prior kind, knot times and solver settings.
        log: Time-ordered measurements inside the knot range.
        landmarks_init: Optional starting landmark positions by id.
        backend: Linear solver for each step (SparseBackend by default).
        callback: Called as callback(iteration, knots, landmarks) with the
            starting point (iteration 0) and after every update.

    Returns:
        SolveReport

    Raises:
        NotConverged: iteration limit hit (carries the report).
        NotPositiveDefinite: propagated from the factorization.
    """
    backend = backend or SparseBackend()
    conv = problem.convergence
    if problem.locked and problem.knot_times.size < 2:
        raise ConfigError("a locked first knot leaves nothing to estimate; add knots")
    ids = log.landmark_ids()
    if ids and (min(ids) < 0 or max(ids) >= max(problem.n_landmarks, 0)):
        raise DimensionMismatch(
            f"landmark ids {ids[0]}..{ids[-1]} outside 0..{problem.n_landmarks - 1}"
        )
    if log.records:
        t = log.times
        if t.min() < problem.knot_times[0] or t.max() > problem.knot_times[-1]:
            raise DimensionMismatch("measurement times fall outside the knot range")
    rows = {lm_id: row for row, lm_id in enumerate(ids)}
    model = _MeasurementModel(log, rows, problem)
    L = len(ids)
    D = problem.kind.state_dim
    linear = problem.kind.is_linear and log.is_linear() and conv.lm_lambda == 0
    relinearize = not problem.kind.is_linear

    t_build = time.perf_counter()
    prior = _build(problem)
    if problem.initial_guess == "odometry" and log.count("odom"):
        knots = _odometry_guess(problem, log)
        if relinearize:
            M = substeps_for(float(np.diff(problem.knot_times).max(initial=1.0)), problem.integration_step)
            prior = _build(problem, OperatingTrajectory.from_knots(problem.knot_times, knots, M))
    else:
        knots = prior.mean.copy()
    build_times = [time.perf_counter() - t_build]

    if landmarks_init is not None:
        landmarks = np.array([landmarks_init[i] for i in ids], dtype=float).reshape(L, 2)
    else:
        landmarks = _initial_landmarks(prior, knots, log, ids, problem.bearing_frame)

    start = 1 if prior.locked else 0
    nx = (prior.n_knots - start) * D
    cost_history: List[float] = []
    step_norms: List[float] = []
    iteration_times: List[float] = []
    converged = False
    iterations = 0
    prev_cost: Optional[float] = None
    stale = False
    if callback is not None:
        callback(0, knots.copy(), landmarks.copy())

    while True:
        t_iter = time.perf_counter()
        if iterations > 0 and relinearize:
            t_build = time.perf_counter()
            prior = _build(problem, interpolate_grid(prior, knots))
            build_times.append(time.perf_counter() - t_build)
        lin = model.linearize(prior, knots, landmarks)
        cost = prior.cost(knots) + lin.cost()
        cost_history.append(cost)
        if prev_cost is not None and abs(prev_cost - cost) <= conv.rel_cost_tol * max(abs(prev_cost), 1e-300):
            converged = True
            break
        if iterations >= conv.max_iters:
            break
        delta = backend.step(prior, lin, knots, L, conv.lm_lambda)
        knots[start:] += delta[:nx].reshape(-1, D)
        if L:
            landmarks += delta[nx:].reshape(L, 2)
        step = float(np.max(np.abs(delta))) if delta.size else 0.0
        step_norms.append(step)
        iterations += 1
        iteration_times.append(time.perf_counter() - t_iter)
        logger.debug("iteration %d: cost %.6e, step %.3e", iterations, cost, step)
        if callback is not None:
            callback(iterations, knots.copy(), landmarks.copy())
        prev_cost = cost
        if step < conv.step_tol or linear:
            converged = True
            stale = True
            break

    if stale:
        if relinearize:
            prior = _build(problem, interpolate_grid(prior, knots))
        lin = model.linearize(prior, knots, landmarks)
        cost_history.append(prior.cost(knots) + lin.cost())
    cov = backend.covariance(prior, lin, knots, L)
    landmark_cov = {lm_id: cov.landmarks[row] for lm_id, row in rows.items()}

    report = SolveReport(
        problem.knot_times.copy(),
        knots,
        {lm_id: landmarks[row].copy() for lm_id, row in rows.items()},
        cov,
        landmark_cov,
        cost_history,
        step_norms,
        iteration_times,
        build_times,
        converged,
        iterations,
        prior,
    )
    if converged:
        logger.info("converged after %d iterations, cost %.6e", iterations, cost_history[-1])
    else:
        logger.warning("no convergence after %d iterations", iterations)
        if conv.raise_on_failure:
            raise NotConverged(report, iterations)
    return report
