"""
Constant-time trajectory queries.

With a Markovian prior, P(tau) P^-1 has exactly two non-zero block columns
(the bracketing knots), so the posterior mean and covariance at any time
follow from the two neighbouring knot estimates:

    x(tau) = x_prior(tau) + Lam (x_n - x_prior_n) + Psi (x_n+1 - x_prior_n+1)
    Psi    = Q_tau Phi(t_n+1, tau)^T Q_n+1^-1
    Lam    = Phi(tau, t_n) - Psi Phi(t_n+1, t_n)

Past the last knot only the last knot contributes (extrapolation).
"""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from lib.blocklin import InverseBlocks
from lib.config import CONFIG
from lib.errors import BeforeStart, DimensionMismatch, OutsideKeytimeRange
from lib.priors import (
    OperatingTrajectory,
    PriorFactorization,
    dead_reckon,
    integrate_intervals,
    substeps_for,
)
from lib.utils import iter_chunks, symmetrize

logger = logging.getLogger(__name__)

CovarianceBlocks = Union[InverseBlocks, Tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class InterpCoefficients:
    """Interpolation coefficients at one query time.

    bracket is (n, n + 1), or (N, None) when extrapolating past the last
    knot, in which case psi is None.
    """

    tau: float
    bracket: Tuple[int, Optional[int]]
    lam: np.ndarray
    psi: Optional[np.ndarray]
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    q_tau: np.ndarray

    @property
    def extrapolated(self) -> bool:
        return self.psi is None


class KeytimeCoefficients(NamedTuple):
    lam: np.ndarray
    psi: np.ndarray
    indices: Tuple[int, int]
    prior_mean: np.ndarray


def _partial_interval(prior: PriorFactorization, n: int, tau: float):
    """Phi(tau, t_n), Q_tau and the mean offset over [t_n, tau]."""
    t_n = prior.times[n]
    dt = tau - t_n
    if not prior.uses_integration() and prior.kind.is_linear:
        dts = np.array([dt])
        return prior.kind.transitions(dts)[0], prior.kind.noise(dts)[0], np.zeros(prior.state_dim)
    if n < prior.n_intervals:
        full = prior.times[n + 1] - t_n
        M = max(2, int(math.ceil(prior.op_traj.substeps * dt / full)))
        times = t_n + dt * np.arange(M + 1) / M
        grid = prior.op_traj(times)[None]
    else:
        M = substeps_for(dt, prior.step)
        start = prior.mean[n] if prior.op_traj is None else prior.op_traj.grid[-1, -1]
        grid = dead_reckon(prior.kind, start, dt, M)[None]
    result = integrate_intervals(
        prior.kind, np.array([t_n]), np.array([dt]), grid, exogenous=prior.exogenous
    )
    return result.trans[0], result.noise[0], result.offset[0]


def _knot_coefficients(prior: PriorFactorization, n: int, tau: float) -> InterpCoefficients:
    D = prior.state_dim
    last = n == prior.n_knots - 1
    return InterpCoefficients(
        tau,
        (n, None) if last else (n, n + 1),
        np.eye(D),
        None if last else np.zeros((D, D)),
        prior.mean[n].copy(),
        prior.marginals[n].copy(),
        np.zeros((D, D)),
    )


def interval_coefficients(prior: PriorFactorization, n: int, tau: float) -> InterpCoefficients:
    """Lam and Psi for tau inside interval n, i.e. t_n <= tau <= t_n+1."""
    t_n, t_next = prior.times[n], prior.times[n + 1]
    if tau < t_n or tau > t_next:
        raise DimensionMismatch(f"tau={tau!r} outside interval [{t_n!r}, {t_next!r}]")
    D = prior.state_dim
    if tau == t_n:
        return InterpCoefficients(
            tau, (n, n + 1), np.eye(D), np.zeros((D, D)),
            prior.mean[n].copy(), prior.marginals[n].copy(), np.zeros((D, D)),
        )
    if tau == t_next:
        return InterpCoefficients(
            tau, (n, n + 1), np.zeros((D, D)), np.eye(D),
            prior.mean[n + 1].copy(), prior.marginals[n + 1].copy(), prior.q[n].copy(),
        )
    phi_tau, q_tau, offset = _partial_interval(prior, n, tau)
    if prior.uses_integration():
        phi_rest = prior.trans[n] @ np.linalg.inv(phi_tau)
    else:
        phi_rest = prior.kind.transitions(np.array([t_next - tau]))[0]
    psi = q_tau @ phi_rest.T @ prior.qinv[n]
    lam = phi_tau - psi @ prior.trans[n]
    mean = phi_tau @ prior.mean[n] + offset
    cov = symmetrize(phi_tau @ prior.marginals[n] @ phi_tau.T + q_tau)
    return InterpCoefficients(tau, (n, n + 1), lam, psi, mean, cov, q_tau)


def coefficients(prior: PriorFactorization, tau: float) -> InterpCoefficients:
    """Coefficients at tau; a knot time resolves to the left bracket."""
    tau = float(tau)
    times = prior.times
    if tau < times[0]:
        raise BeforeStart(tau, float(times[0]))
    n = int(np.searchsorted(times, tau, side="right")) - 1
    if tau == times[n]:
        return _knot_coefficients(prior, n, tau)
    if n == prior.n_knots - 1:
        phi, q_tau, offset = _partial_interval(prior, n, tau)
        mean = phi @ prior.mean[n] + offset
        cov = symmetrize(phi @ prior.marginals[n] @ phi.T + q_tau)
        return InterpCoefficients(tau, (n, None), phi, None, mean, cov, q_tau)
    return interval_coefficients(prior, n, tau)


def mean_from_coefficients(
    prior: PriorFactorization, knots: np.ndarray, c: InterpCoefficients
) -> np.ndarray:
    n, n1 = c.bracket
    x = c.prior_mean + c.lam @ (knots[n] - prior.mean[n])
    if n1 is not None:
        x = x + c.psi @ (knots[n1] - prior.mean[n1])
    return x


def cov_from_coefficients(
    prior: PriorFactorization, cov: CovarianceBlocks, c: InterpCoefficients
) -> np.ndarray:
    """Posterior covariance from the bracketing 2x2 block grid.

    Uses [Lam Psi] P_post [Lam Psi]^T + Q_tau - Psi Q_n+1 Psi^T, the
    conditional form of the interpolation formula.
    """
    diag, offdiag = cov[0], cov[1]
    n, n1 = c.bracket
    if c.psi is None:
        return symmetrize(c.lam @ diag[n] @ c.lam.T + c.q_tau)
    if not np.any(c.psi):
        return symmetrize(diag[n].copy())
    if not np.any(c.lam):
        return symmetrize(diag[n1].copy())
    A = np.hstack([c.lam, c.psi])
    block = np.block([[diag[n], offdiag[n].T], [offdiag[n], diag[n1]]])
    P = A @ block @ A.T + c.q_tau - c.psi @ prior.q[n] @ c.psi.T
    return symmetrize(P)


def query_mean(prior: PriorFactorization, knots: np.ndarray, tau: float) -> np.ndarray:
    """Posterior mean at tau from the knot estimates."""
    return mean_from_coefficients(prior, np.asarray(knots, dtype=float), coefficients(prior, tau))


def query_cov(prior: PriorFactorization, cov: CovarianceBlocks, tau: float) -> np.ndarray:
    """Posterior covariance at tau from the block-tridiagonal posterior blocks."""
    return cov_from_coefficients(prior, cov, coefficients(prior, tau))


def query(
    prior: PriorFactorization,
    knots: np.ndarray,
    cov: Optional[CovarianceBlocks],
    taus: Sequence[float],
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Means (J, D) and covariances (J, D, D) at many query times."""
    knots = np.asarray(knots, dtype=float)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    D = prior.state_dim
    means = np.empty((taus.size, D))
    covs = None if cov is None else np.empty((taus.size, D, D))
    for j, tau in enumerate(taus):
        c = coefficients(prior, tau)
        means[j] = mean_from_coefficients(prior, knots, c)
        if covs is not None:
            covs[j] = cov_from_coefficients(prior, cov, c)
    return means, covs


def keytime_measurement_matrices(
    prior: PriorFactorization, keytimes: Sequence[float], t_meas: float
) -> KeytimeCoefficients:
    """Map keytime perturbations to the state at a measurement time.

    Returns Lam, Psi, the bracketing keytime indices and the prior mean at
    t_meas; a measurement exactly on keytime k has Lam = I, Psi = 0.
    """
    keytimes = np.asarray(keytimes, dtype=float)
    if keytimes.shape != prior.times.shape or not np.allclose(keytimes, prior.times, rtol=0, atol=1e-12):
        raise DimensionMismatch("prior must be built on the keytimes")
    first, last = float(keytimes[0]), float(keytimes[-1])
    if t_meas < first or t_meas > last:
        raise OutsideKeytimeRange(float(t_meas), first, last)
    D = prior.state_dim
    K = keytimes.size - 1
    if K == 0:
        return KeytimeCoefficients(np.eye(D), np.zeros((D, D)), (0, 0), prior.mean[0].copy())
    if t_meas == last:
        return KeytimeCoefficients(np.zeros((D, D)), np.eye(D), (K - 1, K), prior.mean[K].copy())
    c = coefficients(prior, t_meas)
    n = c.bracket[0]
    return KeytimeCoefficients(c.lam, c.psi, (n, n + 1), c.prior_mean)


def interpolate_grid(prior: PriorFactorization, knots: np.ndarray) -> OperatingTrajectory:
    """Posterior interpolant of new knot values on the prior's sub-step grid.

    This is the operating trajectory for the next relinearization of the
    body-frame prior: the previous linearization supplies x_prior, Lam and
    Psi at every grid time.
    """
    if not prior.uses_integration():
        raise DimensionMismatch("grid interpolation needs an integrated prior")
    knots = np.asarray(knots, dtype=float)
    op = prior.op_traj
    K = prior.n_intervals
    grid = np.empty_like(op.grid)
    for sl in iter_chunks(K, CONFIG.RESAMPLE_CHUNK):
        res = integrate_intervals(
            prior.kind,
            prior.times[:-1][sl],
            prior.dt[sl],
            op.grid[sl],
            exogenous=prior.exogenous,
            keep_grid=True,
        )
        Y, P, m = res.trans_grid, res.noise_grid, res.offset_grid
        trans = prior.trans[sl][:, None]
        phi_rest = trans @ np.linalg.inv(Y)
        psi = P @ np.swapaxes(phi_rest, -1, -2) @ prior.qinv[sl][:, None]
        lam = Y - psi @ trans
        idx = np.arange(K)[sl]
        d0 = knots[idx] - prior.mean[idx]
        d1 = knots[idx + 1] - prior.mean[idx + 1]
        base = np.einsum("bjik,bk->bji", Y, prior.mean[idx]) + m
        grid[sl] = (
            base
            + np.einsum("bjik,bk->bji", lam, d0)
            + np.einsum("bjik,bk->bji", psi, d1)
        )
        grid[sl, 0] = knots[idx]
        grid[sl, -1] = knots[idx + 1]
    return OperatingTrajectory(prior.times, grid)
