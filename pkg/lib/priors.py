"""
Gaussian-process motion priors built from stochastic differential equations.

Each prior kind describes dx/dt = F(t) x + v(t) + L w(t), w ~ GP(0, Qc delta).
The lifted prior x ~ N(F v, F Q F^T) is carried as per-interval transition
matrices, noise blocks and their inverses, which makes the inverse kernel
P^-1 = F^-T Q^-1 F^-1 exactly block-tridiagonal.

State layout per knot: [position (dof); rate (dof)], with dof = 3 for planar
robots (x, y, theta). The body-frame prior uses [pose; body velocity].
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import expm, solve_continuous_lyapunov

from lib.blocklin import BlockTridiagonalSystem
from lib.config import CONFIG
from lib.errors import (
    ConfigError,
    DegenerateInterval,
    DimensionMismatch,
    NegativeInterval,
    NonMonotonicTimes,
)
from lib.utils import rotation, symmetrize

logger = logging.getLogger(__name__)

StateFunction = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# Knot state
# ---------------------------------------------------------------------------


@dataclass
class KnotState:
    """Markovian state at one knot: planar pose plus a velocity triple.

    velocity holds the inertial pose rate for the LTI and Matern priors and
    the body-frame velocity (v, u, omega) for the NTV prior.
    """

    pose: np.ndarray
    velocity: np.ndarray
    convention: str = "inertial"

    @classmethod
    def from_vector(cls, vec: Sequence[float], convention: str = "inertial") -> "KnotState":
        vec = np.asarray(vec, dtype=float)
        if vec.size != 6:
            raise DimensionMismatch(f"knot state needs 6 entries, got {vec.size}")
        return cls(vec[:3].copy(), vec[3:].copy(), convention)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.pose, self.velocity])


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def _lift(blocks: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Expand per-dof 2x2 blocks (K, 2, 2) to (K, 2*dof, 2*dof) = kron(S, diag(scale))."""
    dof = scale.size
    K = blocks.shape[0]
    return np.einsum("kab,ij->kaibj", blocks, np.diag(scale)).reshape(K, 2 * dof, 2 * dof)


def cv_transition(dt: np.ndarray, dof: int) -> np.ndarray:
    """Constant-velocity transition [[1, dt],[0, 1]] (x) I per interval."""
    dt = np.atleast_1d(np.asarray(dt, dtype=float))
    S = np.zeros((dt.size, 2, 2))
    S[:, 0, 0] = 1.0
    S[:, 0, 1] = dt
    S[:, 1, 1] = 1.0
    return _lift(S, np.ones(dof))


def cv_noise(dt: np.ndarray, qc: np.ndarray) -> np.ndarray:
    """Constant-velocity noise block [[dt^3/3, dt^2/2],[dt^2/2, dt]] (x) Qc."""
    dt = np.atleast_1d(np.asarray(dt, dtype=float))
    S = np.empty((dt.size, 2, 2))
    S[:, 0, 0] = dt**3 / 3.0
    S[:, 0, 1] = S[:, 1, 0] = dt**2 / 2.0
    S[:, 1, 1] = dt
    return _lift(S, np.asarray(qc, dtype=float))


def cv_noise_inverse(dt: np.ndarray, qc: np.ndarray) -> np.ndarray:
    dt = np.atleast_1d(np.asarray(dt, dtype=float))
    S = np.empty((dt.size, 2, 2))
    S[:, 0, 0] = 12.0 / dt**3
    S[:, 0, 1] = S[:, 1, 0] = -6.0 / dt**2
    S[:, 1, 1] = 4.0 / dt
    return _lift(S, 1.0 / np.asarray(qc, dtype=float))


def matern_kernel_value(sigma: float, length_scale: float, lag) -> float:
    """Matern nu=3/2 covariance sigma^2 (1 + sqrt(3)|tau|/l) exp(-sqrt(3)|tau|/l)."""
    if sigma <= 0 or length_scale <= 0:
        raise ConfigError("Matern sigma and length scale must be positive")
    r = math.sqrt(3.0) * np.abs(np.asarray(lag, dtype=float)) / length_scale
    value = sigma**2 * (1.0 + r) * np.exp(-r)
    return float(value) if np.ndim(value) == 0 else value


# ---------------------------------------------------------------------------
# Prior kinds
# ---------------------------------------------------------------------------


def _check_qc(qc: Tuple[float, ...]) -> Tuple[float, ...]:
    qc = tuple(float(q) for q in qc)
    if not qc or any(not np.isfinite(q) or q <= 0 for q in qc):
        raise ConfigError(f"Qc entries must be positive, got {qc}")
    return qc


class PriorKind:
    """Interface shared by the prior kinds."""

    name = ""
    velocity_convention = "inertial"
    is_linear = True
    qc: Tuple[float, ...] = ()

    @property
    def dof(self) -> int:
        return len(self.qc)

    @property
    def state_dim(self) -> int:
        return 2 * self.dof

    @property
    def qc_diag(self) -> np.ndarray:
        return np.asarray(self.qc, dtype=float)

    def with_qc(self, qc: Sequence[float]) -> "PriorKind":
        return replace(self, qc=_check_qc(tuple(qc)))

    def noise_input(self, qc: Optional[np.ndarray] = None) -> np.ndarray:
        """L Qc L^T: white noise enters the rate half of the state."""
        qc = self.qc_diag if qc is None else np.asarray(qc, dtype=float)
        G = np.zeros((self.state_dim, self.state_dim))
        G[self.dof :, self.dof :] = np.diag(qc)
        return G

    def drift_matrix(self) -> np.ndarray:
        raise NotImplementedError

    def linearize(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Jacobian F and offset v = f(x) - F x at states x (B, D)."""
        B = x.shape[0]
        return np.broadcast_to(self.drift_matrix(), (B, self.state_dim, self.state_dim)), np.zeros(
            (B, self.state_dim)
        )

    def dynamics(self, x: np.ndarray) -> np.ndarray:
        """Noise-free drift f(x) for states x (B, D)."""
        return x @ self.drift_matrix().T

    def transitions(self, dt: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def noise(self, dt: np.ndarray, qc: Optional[np.ndarray] = None) -> np.ndarray:
        raise NotImplementedError

    def noise_inverse(self, dt: np.ndarray) -> np.ndarray:
        return np.linalg.inv(self.noise(dt))

    def default_initial_covariance(self) -> Optional[np.ndarray]:
        return None

    def to_dict(self) -> dict:
        return {"name": self.name, "qc": list(self.qc)}


@dataclass(frozen=True)
class LtiConstVel(PriorKind):
    """White-noise-on-acceleration prior p'' = w(t) in the inertial frame."""

    qc: Tuple[float, ...] = CONFIG.DEFAULT_QC
    name = "lti"

    def __post_init__(self):
        object.__setattr__(self, "qc", _check_qc(self.qc))

    def drift_matrix(self) -> np.ndarray:
        D = self.state_dim
        F = np.zeros((D, D))
        F[: self.dof, self.dof :] = np.eye(self.dof)
        return F

    def transitions(self, dt):
        return cv_transition(dt, self.dof)

    def noise(self, dt, qc=None):
        return cv_noise(dt, self.qc_diag if qc is None else qc)

    def noise_inverse(self, dt):
        return cv_noise_inverse(dt, self.qc_diag)


@dataclass(frozen=True)
class Matern32(PriorKind):
    """Matern-3/2 prior per degree of freedom: p'' = -lam^2 p - 2 lam p' + w.

    Qc defaults to 4 sigma^2 lam^3 on every dof (lam = sqrt(3)/length_scale).
    """

    length_scale: float = 1.0
    sigma: float = 1.0
    dof_count: int = CONFIG.DEFAULT_DOF
    qc: Optional[Tuple[float, ...]] = None
    name = "matern"

    def __post_init__(self):
        if self.length_scale <= 0 or self.sigma <= 0:
            raise ConfigError("Matern sigma and length scale must be positive")
        if self.qc is None:
            value = 4.0 * self.sigma**2 * self.lam**3
            object.__setattr__(self, "qc", (value,) * self.dof_count)
        object.__setattr__(self, "qc", _check_qc(self.qc))
        object.__setattr__(self, "dof_count", len(self.qc))

    @property
    def lam(self) -> float:
        return math.sqrt(3.0) / self.length_scale

    def _scalar_drift(self) -> np.ndarray:
        lam = self.lam
        return np.array([[0.0, 1.0], [-(lam**2), -2.0 * lam]])

    def drift_matrix(self) -> np.ndarray:
        return _lift(self._scalar_drift()[None], np.ones(self.dof))[0]

    def transitions(self, dt):
        dt = np.atleast_1d(np.asarray(dt, dtype=float))
        lam = self.lam
        decay = np.exp(-lam * dt)
        S = np.empty((dt.size, 2, 2))
        S[:, 0, 0] = decay * (1.0 + lam * dt)
        S[:, 0, 1] = decay * dt
        S[:, 1, 0] = -decay * lam**2 * dt
        S[:, 1, 1] = decay * (1.0 - lam * dt)
        return _lift(S, np.ones(self.dof))

    def _unit_noise(self, dt: np.ndarray) -> np.ndarray:
        """Scalar-dof noise blocks for unit Qc.

        Van Loan's matrix exponential for short intervals; the stationary
        form Pinf - Phi Pinf Phi^T once the transition has decayed.
        """
        dt = np.atleast_1d(np.asarray(dt, dtype=float))
        out = np.empty((dt.size, 2, 2))
        F = self._scalar_drift()
        G = np.array([[0.0, 0.0], [0.0, 1.0]])
        short = self.lam * dt <= 5.0
        if np.any(short):
            A = np.zeros((4, 4))
            A[:2, :2] = -F
            A[:2, 2:] = G
            A[2:, 2:] = F.T
            C = expm(A[None] * dt[short, None, None])
            Phi = np.swapaxes(C[:, 2:, 2:], 1, 2)
            out[short] = Phi @ C[:, :2, 2:]
        if np.any(~short):
            Pinf = self._unit_stationary()
            Phi = self._scalar_transitions(dt[~short])
            out[~short] = Pinf - Phi @ Pinf @ np.swapaxes(Phi, 1, 2)
        return symmetrize(out)

    def _scalar_transitions(self, dt):
        return self.transitions(dt)[:, :: self.dof, :: self.dof]

    def _unit_stationary(self) -> np.ndarray:
        G = np.array([[0.0, 0.0], [0.0, 1.0]])
        return solve_continuous_lyapunov(self._scalar_drift(), -G)

    def noise(self, dt, qc=None):
        return _lift(self._unit_noise(dt), self.qc_diag if qc is None else np.asarray(qc))

    def noise_inverse(self, dt):
        return _lift(np.linalg.inv(self._unit_noise(dt)), 1.0 / self.qc_diag)

    def stationary_covariance(self) -> np.ndarray:
        """Pinf solving F P + P F^T + L Qc L^T = 0."""
        return _lift(self._unit_stationary()[None], self.qc_diag)[0]

    def stationary_cross_covariance(self, lag: float) -> np.ndarray:
        """cov(x(t + lag), x(t)) = Phi(lag) Pinf at stationarity."""
        lag = abs(float(lag))
        Phi = self.transitions(np.array([lag]))[0] if lag > 0 else np.eye(self.state_dim)
        return Phi @ self.stationary_covariance()

    def default_initial_covariance(self) -> Optional[np.ndarray]:
        return self.stationary_covariance()

    def to_dict(self) -> dict:
        data = super().to_dict()
        data.update(length_scale=self.length_scale, sigma=self.sigma)
        return data


@dataclass(frozen=True)
class NtvBodyConstVel(PriorKind):
    """White noise on body-frame acceleration: p' = R(theta) nu, nu' = w."""

    qc: Tuple[float, ...] = CONFIG.DEFAULT_QC
    name = "ntv"
    velocity_convention = "body"
    is_linear = False

    def __post_init__(self):
        object.__setattr__(self, "qc", _check_qc(self.qc))
        if len(self.qc) != 3:
            raise ConfigError("the body-frame prior is planar: Qc needs 3 entries")

    def dynamics(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x)
        out[:, :3] = np.einsum("bij,bj->bi", rotation(x[:, 2]), x[:, 3:6])
        return out

    def linearize(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        B = x.shape[0]
        theta, nu_v, nu_u = x[:, 2], x[:, 3], x[:, 4]
        c, s = np.cos(theta), np.sin(theta)
        F = np.zeros((B, 6, 6))
        a0 = -s * nu_v - c * nu_u
        a1 = c * nu_v - s * nu_u
        F[:, 0, 2] = a0
        F[:, 1, 2] = a1
        F[:, :3, 3:] = rotation(theta)
        v = np.zeros((B, 6))
        v[:, 0] = -a0 * theta
        v[:, 1] = -a1 * theta
        return F, v


PRIOR_KINDS = {"lti": LtiConstVel, "ntv": NtvBodyConstVel, "matern": Matern32}


def make_prior_kind(name: str, qc: Optional[Sequence[float]] = None, **params) -> PriorKind:
    """Build a prior kind by CLI name ('lti', 'ntv', 'matern')."""
    try:
        cls = PRIOR_KINDS[name]
    except KeyError:
        raise ConfigError(f"unknown prior '{name}' (expected one of {sorted(PRIOR_KINDS)})")
    kwargs = dict(params)
    if qc is not None:
        kwargs["qc"] = tuple(qc)
    return cls(**kwargs)


# ---------------------------------------------------------------------------
# Operating trajectory and numerical integration
# ---------------------------------------------------------------------------


def substeps_for(max_dt: float, step: Optional[float] = None) -> int:
    step = CONFIG.INTEGRATION_STEP_S if step is None else step
    return max(CONFIG.INTEGRATION_MIN_SUBSTEPS, int(math.ceil(max_dt / step - 1e-9)))


@dataclass(frozen=True)
class OperatingTrajectory:
    """x_op(t) sampled on a uniform sub-step grid inside every interval.

    grid[n, j] is x_op at times[n] + j * (times[n+1] - times[n]) / M.
    Between samples the trajectory is piecewise linear.
    """

    times: np.ndarray
    grid: np.ndarray

    @property
    def substeps(self) -> int:
        return self.grid.shape[1] - 1

    @classmethod
    def from_knots(cls, times, knots, substeps: int) -> "OperatingTrajectory":
        times = np.asarray(times, dtype=float)
        knots = np.asarray(knots, dtype=float)
        frac = np.linspace(0.0, 1.0, substeps + 1)
        grid = knots[:-1, None, :] + frac[None, :, None] * (knots[1:] - knots[:-1])[:, None, :]
        return cls(times, grid)

    @classmethod
    def from_function(cls, fn: StateFunction, times, substeps: int) -> "OperatingTrajectory":
        times = np.asarray(times, dtype=float)
        grid_times = grid_times_for(times, substeps)
        states = np.asarray(fn(grid_times.ravel()), dtype=float)
        return cls(times, states.reshape(grid_times.shape + (-1,)))

    def knot_states(self) -> np.ndarray:
        return np.vstack([self.grid[:, 0], self.grid[-1:, -1]])

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        K = self.grid.shape[0]
        M = self.substeps
        n = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, K - 1)
        dt = self.times[n + 1] - self.times[n]
        u = np.clip((t - self.times[n]) / dt, 0.0, 1.0) * M
        j = np.clip(np.floor(u).astype(int), 0, M - 1)
        frac = (u - j)[:, None]
        return (1.0 - frac) * self.grid[n, j] + frac * self.grid[n, j + 1]


def grid_times_for(times: np.ndarray, substeps: int) -> np.ndarray:
    frac = np.arange(substeps + 1) / substeps
    return times[:-1, None] + frac[None, :] * np.diff(times)[:, None]


@dataclass
class IntervalIntegration:
    """Per-interval transition, noise and mean offset (optionally on the grid)."""

    trans: np.ndarray
    noise: np.ndarray
    offset: np.ndarray
    trans_grid: Optional[np.ndarray] = None
    noise_grid: Optional[np.ndarray] = None
    offset_grid: Optional[np.ndarray] = None


def integrate_intervals(
    kind: PriorKind,
    starts: np.ndarray,
    durations: np.ndarray,
    op_grid: np.ndarray,
    qc: Optional[np.ndarray] = None,
    exogenous: Optional[StateFunction] = None,
    keep_grid: bool = False,
) -> IntervalIntegration:
    """Batched RK4 for the linearized SDE over many intervals at once.

    Integrates, from each interval start, the normalized fundamental matrix
    (Y' = F Y), the noise covariance (P' = F P + P F^T + L Qc L^T) and the
    mean offset (m' = F m + v), with F and v taken from the linearization
    about the piecewise-linear operating trajectory.
    """
    B, M1, D = op_grid.shape
    M = M1 - 1
    starts = np.asarray(starts, dtype=float)
    h = np.asarray(durations, dtype=float) / M
    hm = h[:, None, None]
    hv = h[:, None]
    G = kind.noise_input(qc)

    def linearized(x, t):
        F, v = kind.linearize(x)
        if exogenous is not None:
            v = v + np.asarray(exogenous(t), dtype=float).reshape(B, D)
        return F, v

    def rates(F, v, Y, P, m):
        FP = F @ P
        return F @ Y, FP + np.swapaxes(FP, 1, 2) + G, np.einsum("bij,bj->bi", F, m) + v

    Y = np.broadcast_to(np.eye(D), (B, D, D)).copy()
    P = np.zeros((B, D, D))
    m = np.zeros((B, D))
    if keep_grid:
        Yg = np.empty((B, M1, D, D))
        Pg = np.empty((B, M1, D, D))
        mg = np.empty((B, M1, D))
        Yg[:, 0], Pg[:, 0], mg[:, 0] = Y, P, m

    Fa, va = linearized(op_grid[:, 0], starts)
    for j in range(M):
        t0 = starts + j * h
        Fm, vm = linearized(0.5 * (op_grid[:, j] + op_grid[:, j + 1]), t0 + 0.5 * h)
        Fb, vb = linearized(op_grid[:, j + 1], t0 + h)
        k1 = rates(Fa, va, Y, P, m)
        k2 = rates(Fm, vm, Y + 0.5 * hm * k1[0], P + 0.5 * hm * k1[1], m + 0.5 * hv * k1[2])
        k3 = rates(Fm, vm, Y + 0.5 * hm * k2[0], P + 0.5 * hm * k2[1], m + 0.5 * hv * k2[2])
        k4 = rates(Fb, vb, Y + hm * k3[0], P + hm * k3[1], m + hv * k3[2])
        Y = Y + hm / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        P = P + hm / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        m = m + hv / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        P = symmetrize(P)
        if keep_grid:
            Yg[:, j + 1], Pg[:, j + 1], mg[:, j + 1] = Y, P, m
        Fa, va = Fb, vb

    result = IntervalIntegration(Y, P, m)
    if keep_grid:
        result.trans_grid, result.noise_grid, result.offset_grid = Yg, Pg, mg
    return result


def dead_reckon(kind: PriorKind, x_start: np.ndarray, duration: float, substeps: int) -> np.ndarray:
    """Noise-free RK4 propagation of f(x); returns (substeps + 1, D) samples."""
    h = duration / substeps
    out = np.empty((substeps + 1, kind.state_dim))
    x = np.asarray(x_start, dtype=float)[None, :]
    out[0] = x[0]
    for j in range(substeps):
        k1 = kind.dynamics(x)
        k2 = kind.dynamics(x + 0.5 * h * k1)
        k3 = kind.dynamics(x + 0.5 * h * k2)
        k4 = kind.dynamics(x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[j + 1] = x[0]
    return out


def _sample_operating(op_traj, t_from: float, t_to: float, substeps: int) -> np.ndarray:
    times = t_from + (t_to - t_from) * np.arange(substeps + 1) / substeps
    return np.asarray(op_traj(times), dtype=float).reshape(substeps + 1, -1)


# ---------------------------------------------------------------------------
# Transition and noise for a single interval
# ---------------------------------------------------------------------------


OperatingInput = Union[OperatingTrajectory, StateFunction, None]


def _interval_integration(kind, op_traj, t, s, step):
    if op_traj is None:
        raise ConfigError(f"the {kind.name} prior needs an operating trajectory")
    M = substeps_for(t - s, step)
    grid = _sample_operating(op_traj, s, t, M)[None]
    return integrate_intervals(kind, np.array([s]), np.array([t - s]), grid)


def transition(
    kind: PriorKind, op_traj: OperatingInput, t: float, s: float, step: Optional[float] = None
) -> np.ndarray:
    """Phi(t, s) for any prior kind.

    Closed form for the linear kinds; for the body-frame prior the
    normalized fundamental matrix is integrated along op_traj.
    """
    if t < s:
        raise NegativeInterval(t, s)
    if t == s:
        return np.eye(kind.state_dim)
    if kind.is_linear:
        return kind.transitions(np.array([t - s]))[0]
    return _interval_integration(kind, op_traj, t, s, step).trans[0]


def noise_block(
    kind: PriorKind,
    op_traj: OperatingInput,
    t_prev: float,
    t_next: float,
    step: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Q_n over (t_prev, t_next] and its inverse."""
    if t_next < t_prev:
        raise NegativeInterval(t_next, t_prev)
    dt = t_next - t_prev
    if dt < CONFIG.MIN_INTERVAL_S:
        raise DegenerateInterval(dt)
    if kind.is_linear:
        dts = np.array([dt])
        return kind.noise(dts)[0], kind.noise_inverse(dts)[0]
    Q = _interval_integration(kind, op_traj, t_next, t_prev, step).noise[0]
    return Q, np.linalg.inv(Q)


# ---------------------------------------------------------------------------
# Lifted prior
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PriorFactorization:
    """Lifted prior over knot times t_0..t_N.

    trans[n], q[n], qinv[n] and offset[n] belong to the interval ending at
    knot n + 1. With locked=True knot 0 is held at x0 and carries no
    uncertainty; otherwise p0 is its prior covariance.
    """

    kind: PriorKind
    times: np.ndarray
    trans: np.ndarray
    q: np.ndarray
    qinv: np.ndarray
    offset: np.ndarray
    mean: np.ndarray
    x0: np.ndarray
    p0: Optional[np.ndarray]
    op_traj: Optional[OperatingTrajectory] = None
    step: Optional[float] = None
    exogenous: Optional[StateFunction] = field(default=None, repr=False)

    @property
    def locked(self) -> bool:
        return self.p0 is None

    @property
    def n_knots(self) -> int:
        return self.times.size

    @property
    def n_intervals(self) -> int:
        return self.times.size - 1

    @property
    def state_dim(self) -> int:
        return self.kind.state_dim

    @property
    def qc(self) -> np.ndarray:
        return self.kind.qc_diag

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    def uses_integration(self) -> bool:
        return self.op_traj is not None

    @cached_property
    def marginals(self) -> np.ndarray:
        """Prior covariance P(t_n, t_n) at every knot."""
        D = self.state_dim
        out = np.empty((self.n_knots, D, D))
        out[0] = np.zeros((D, D)) if self.locked else self.p0
        for n in range(self.n_intervals):
            out[n + 1] = self.trans[n] @ out[n] @ self.trans[n].T + self.q[n]
        return symmetrize(out)

    def residuals(self, knots: np.ndarray) -> np.ndarray:
        """Prior errors e_0 = x_0 - x0 and e_n = x_n - Phi_n x_{n-1} - v_n."""
        knots = np.asarray(knots, dtype=float)
        e = np.empty_like(knots)
        e[0] = knots[0] - self.x0
        e[1:] = knots[1:] - np.einsum("nij,nj->ni", self.trans, knots[:-1]) - self.offset
        return e

    def cost(self, knots: np.ndarray) -> float:
        """1/2 sum e^T Q^-1 e over the prior factors."""
        e = self.residuals(knots)
        total = np.einsum("ni,nij,nj->", e[1:], self.qinv, e[1:])
        if not self.locked:
            total += e[0] @ np.linalg.solve(self.p0, e[0])
        return 0.5 * float(total)

    def normal_equations(self, knots: Optional[np.ndarray] = None) -> BlockTridiagonalSystem:
        """P^-1 over all knots and rhs F^-T Q^-1 (v - F^-1 x_op).

        Block 0 carries P0^-1 when free; when locked it is left zero and
        should be eliminated by the caller (drop_first).
        """
        K, D = self.n_knots, self.state_dim
        system = BlockTridiagonalSystem.zeros(K, D)
        QinvPhi = self.qinv @ self.trans
        system.diag[:-1] += np.swapaxes(self.trans, 1, 2) @ QinvPhi
        system.diag[1:] += self.qinv
        system.offdiag[:] = -QinvPhi
        if not self.locked:
            system.diag[0] += np.linalg.inv(self.p0)
        if knots is not None:
            e = self.residuals(knots)
            b = np.zeros((K, D))
            Qe = np.einsum("nij,nj->ni", self.qinv, e[1:])
            b[:-1] += np.einsum("nji,nj->ni", self.trans, Qe)
            b[1:] -= Qe
            if not self.locked:
                b[0] -= np.linalg.solve(self.p0, e[0])
            system.rhs = b.ravel()
        return system

    def inverse_kernel(self) -> BlockTridiagonalSystem:
        """Exactly sparse P^-1 over the free knots."""
        system = self.normal_equations()
        return system.drop_first() if self.locked else system

    def noise_basis(self) -> np.ndarray:
        """dQ_n / dQc_ii for every dof i, shape (dof, N, D, D)."""
        dof = self.kind.dof
        out = np.empty((dof, self.n_intervals, self.state_dim, self.state_dim))
        for i in range(dof):
            unit = np.zeros(dof)
            unit[i] = 1.0
            if self.uses_integration():
                out[i] = integrate_intervals(
                    self.kind, self.times[:-1], self.dt, self.op_traj.grid, qc=unit
                ).noise
            else:
                out[i] = self.kind.noise(self.dt, qc=unit)
        return out

    def with_qc(self, qc: Sequence[float]) -> "PriorFactorization":
        """Same prior with a new Qc; noise blocks scale linearly."""
        kind = self.kind.with_qc(qc)
        basis = self.noise_basis()
        q = symmetrize(np.einsum("i,inab->nab", kind.qc_diag, basis))
        return replace(self, kind=kind, q=q, qinv=np.linalg.inv(q))


def _check_times(times: np.ndarray) -> None:
    if times.ndim != 1 or times.size < 1:
        raise DimensionMismatch("times must be a non-empty vector")
    dt = np.diff(times)
    bad = np.flatnonzero(dt <= 0)
    if bad.size:
        raise NonMonotonicTimes(int(bad[0]) + 1)
    tiny = np.flatnonzero(dt < CONFIG.MIN_INTERVAL_S)
    if tiny.size:
        raise DegenerateInterval(float(dt[tiny[0]]))


def build_prior(
    kind: PriorKind,
    times: Sequence[float],
    op_traj: OperatingInput = None,
    exogenous: Optional[StateFunction] = None,
    x0: Optional[np.ndarray] = None,
    p0: Optional[np.ndarray] = None,
    lock_first: bool = True,
    step: Optional[float] = None,
    integrate: bool = False,
) -> PriorFactorization:
    """Build the lifted prior at the given knot times.

    Args:
        kind: Prior kind with its Qc.
        times: Strictly increasing knot times.
        op_traj: Operating trajectory for the nonlinear kind (an
            OperatingTrajectory or any callable of time). Defaults to holding
            x0, the zero-velocity dead reckoning from the first knot.
        exogenous: Optional known input v(t); routes through integration.
        x0: Mean (or locked value) of the first knot; zeros by default.
        p0: Covariance of the first knot when it is not locked.
        lock_first: Hold knot 0 at x0 instead of giving it a prior.
        step: Maximum integration step in seconds.
        integrate: Force the numerical path for linear kinds.

    Returns:
        PriorFactorization
    """
    times = np.asarray(times, dtype=float)
    _check_times(times)
    D = kind.state_dim
    x0 = np.zeros(D) if x0 is None else np.asarray(x0, dtype=float)
    if x0.size != D:
        raise DimensionMismatch(f"x0 has {x0.size} entries, prior state has {D}")
    if lock_first:
        p0 = None
    else:
        p0 = kind.default_initial_covariance() if p0 is None else np.asarray(p0, dtype=float)
        if p0 is None:
            raise ConfigError(f"a free first knot needs P0 for the {kind.name} prior")

    K = times.size - 1
    dt = np.diff(times)
    numeric = integrate or exogenous is not None or not kind.is_linear
    op = None
    if K == 0:
        trans = np.zeros((0, D, D))
        q = np.zeros((0, D, D))
        qinv = np.zeros((0, D, D))
        offset = np.zeros((0, D))
    elif not numeric:
        trans = kind.transitions(dt)
        q = kind.noise(dt)
        qinv = kind.noise_inverse(dt)
        offset = np.zeros((K, D))
    else:
        M = substeps_for(float(dt.max()), step)
        if isinstance(op_traj, OperatingTrajectory) and op_traj.times.shape == times.shape and np.array_equal(
            op_traj.times, times
        ):
            op = op_traj
        elif op_traj is None:
            op = OperatingTrajectory(times, np.broadcast_to(x0, (K, M + 1, D)).copy())
        else:
            op = OperatingTrajectory.from_function(op_traj, times, M)
        result = integrate_intervals(kind, times[:-1], dt, op.grid, exogenous=exogenous)
        trans, q, offset = result.trans, result.noise, result.offset
        qinv = symmetrize(np.linalg.inv(q))

    mean = np.empty((K + 1, D))
    mean[0] = x0
    for n in range(K):
        mean[n + 1] = trans[n] @ mean[n] + offset[n]
    logger.debug("built %s prior over %d knots (integrated=%s)", kind.name, K + 1, op is not None)
    return PriorFactorization(
        kind, times, trans, q, qinv, offset, mean, x0, p0, op, step, exogenous
    )


def stationary_covariance(kind: PriorKind) -> np.ndarray:
    """Stationary state covariance of a stable prior (Matern only)."""
    if not isinstance(kind, Matern32):
        raise ConfigError(f"the {kind.name} prior has no stationary covariance")
    return kind.stationary_covariance()
