"""
Dense Gaussian-process baseline.

Builds the prior kernel P(t_i, t_j) pair by pair, inverts it densely and runs
the same Gauss-Newton iteration as the sparse estimator with

    (P^-1 + G^T R^-1 G) dx = P^-1 (x_prior - x_op) + G^T R^-1 (y - g)

Cubic in the number of knots; used as an oracle and as the dense timing
reference.
"""

import logging
import time
from typing import List, Mapping, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from lib.blocklin import InverseBlocks
from lib.errors import NotPositiveDefinite
from lib.estimator import LinearizedMeasurements, SolveReport, SteamProblem, solve
from lib.measurements import MeasurementLog
from lib.priors import PriorFactorization
from lib.utils import symmetrize

logger = logging.getLogger(__name__)


def transition_between(prior: PriorFactorization, i: int, j: int) -> np.ndarray:
    """Phi(t_i, t_j) for knot indices i >= j as a product of interval transitions."""
    D = prior.state_dim
    Phi = np.eye(D)
    for n in range(j, i):
        Phi = prior.trans[n] @ Phi
    return Phi


def lifted_transition(prior: PriorFactorization) -> np.ndarray:
    """Lower block-triangular F with F[i, j] = Phi(t_i, t_j)."""
    K, D = prior.n_knots, prior.state_dim
    F = np.zeros((K * D, K * D))
    for j in range(K):
        Phi = np.eye(D)
        for i in range(j, K):
            if i > j:
                Phi = prior.trans[i - 1] @ Phi
            F[i * D : (i + 1) * D, j * D : (j + 1) * D] = Phi
    return F


def dense_kernel(prior: PriorFactorization, free_only: bool = True) -> np.ndarray:
    """P(t_i, t_j) over the knots, assembled pairwise.

    P(t_i, t_j) = Phi(t_i, t_j) P(t_j, t_j) for i >= j. A locked first knot
    has no covariance and is left out when free_only is set.
    """
    K, D = prior.n_knots, prior.state_dim
    marginals = prior.marginals
    P = np.zeros((K * D, K * D))
    for j in range(K):
        Phi = np.eye(D)
        for i in range(j, K):
            if i > j:
                Phi = prior.trans[i - 1] @ Phi
            block = Phi @ marginals[j]
            P[i * D : (i + 1) * D, j * D : (j + 1) * D] = block
            P[j * D : (j + 1) * D, i * D : (i + 1) * D] = block.T
    if free_only and prior.locked:
        P = P[D:, D:]
    return symmetrize(P)


def dense_inverse_kernel(prior: PriorFactorization) -> np.ndarray:
    """Dense P^-1 over the free knots by Cholesky inversion of the pairwise kernel."""
    P = dense_kernel(prior)
    try:
        factor = cho_factor(P, lower=True, check_finite=False)
    except LinAlgError as e:
        raise NotPositiveDefinite(0, "dense kernel", str(e)) from None
    return symmetrize(cho_solve(factor, np.eye(P.shape[0]), check_finite=False))


def dense_measurement_terms(
    linearized: LinearizedMeasurements,
    n_knots: int,
    state_dim: int,
    n_landmarks: int,
    locked: bool,
):
    """G^T R^-1 G and G^T R^-1 (y - g) over the free variables.

    Each measurement row touches at most two knots and one landmark, so the
    Jacobian is kept compact as (M, k, 2D + 2) with its column indices and
    scattered into the dense system.
    """
    D = state_dim
    nx = n_knots * D
    size = nx + 2 * n_landmarks
    H = np.zeros((size, size))
    b = np.zeros(size)
    offsets = np.arange(D)
    for g in linearized.groups:
        M, k = g.r.shape
        J = np.zeros((M, k, 2 * D + 2))
        cols = np.zeros((M, 2 * D + 2), dtype=int)
        J[:, :, :D] = g.A
        cols[:, :D] = g.idx[:, None] * D + offsets
        nxt = np.minimum(g.idx + 1, n_knots - 1)
        J[:, :, D : 2 * D] = np.where(g.has_next[:, None, None], g.B, 0.0)
        cols[:, D : 2 * D] = nxt[:, None] * D + offsets
        lm = g.lm >= 0
        J[:, :, 2 * D :] = np.where(lm[:, None, None], g.Hl, 0.0)
        cols[:, 2 * D :] = np.where(lm[:, None], nx + 2 * g.lm[:, None] + np.arange(2), 0)
        RJ = g.Rinv @ J
        np.add.at(H, (cols[:, :, None], cols[:, None, :]), np.swapaxes(J, 1, 2) @ RJ)
        np.add.at(b, cols, np.einsum("mip,mi->mp", RJ, g.r))
    if locked:
        H = H[D:, D:]
        b = b[D:]
    return H, b


class DenseBackend:
    """Dense Gauss-Newton steps for the estimator loop.

    The inverse kernel is rebuilt whenever the prior changes (every
    iteration for the body-frame prior, once otherwise).
    """

    name = "dense"

    def __init__(self):
        self._prior: Optional[PriorFactorization] = None
        self._kernel_inv: Optional[np.ndarray] = None
        self.kernel_times: List[float] = []

    def kernel_inverse(self, prior: PriorFactorization) -> np.ndarray:
        if self._prior is not prior:
            started = time.perf_counter()
            self._kernel_inv = dense_inverse_kernel(prior)
            self._prior = prior
            self.kernel_times.append(time.perf_counter() - started)
        return self._kernel_inv

    def _system(self, prior, linearized, knots, n_landmarks, lm_lambda=0.0):
        D = prior.state_dim
        start = 1 if prior.locked else 0
        nx = (prior.n_knots - start) * D
        Pinv = self.kernel_inverse(prior)
        H, b = dense_measurement_terms(linearized, prior.n_knots, D, n_landmarks, prior.locked)
        H[:nx, :nx] += Pinv
        b[:nx] += Pinv @ (prior.mean[start:] - knots[start:]).ravel()
        if lm_lambda > 0:
            H += lm_lambda * np.eye(H.shape[0])
        return symmetrize(H), b

    def step(
        self,
        prior: PriorFactorization,
        linearized: LinearizedMeasurements,
        knots: np.ndarray,
        n_landmarks: int,
        lm_lambda: float = 0.0,
    ) -> np.ndarray:
        H, b = self._system(prior, linearized, knots, n_landmarks, lm_lambda)
        try:
            factor = cho_factor(H, lower=True, check_finite=False)
        except LinAlgError as e:
            raise NotPositiveDefinite(0, "dense system", str(e)) from None
        return cho_solve(factor, b, check_finite=False)

    def covariance(
        self,
        prior: PriorFactorization,
        linearized: LinearizedMeasurements,
        knots: np.ndarray,
        n_landmarks: int,
    ) -> InverseBlocks:
        H, _ = self._system(prior, linearized, knots, n_landmarks)
        try:
            factor = cho_factor(H, lower=True, check_finite=False)
        except LinAlgError as e:
            raise NotPositiveDefinite(0, "dense system", str(e)) from None
        S = cho_solve(factor, np.eye(H.shape[0]), check_finite=False)
        return dense_blocks(S, prior.n_knots, prior.state_dim, n_landmarks, prior.locked)


def dense_blocks(
    S: np.ndarray, n_knots: int, state_dim: int, n_landmarks: int, locked: bool
) -> InverseBlocks:
    """Cut the block-tridiagonal portion and landmark marginals out of a dense inverse."""
    D = state_dim
    start = 1 if locked else 0
    diag = np.zeros((n_knots, D, D))
    off = np.zeros((max(n_knots - 1, 0), D, D))
    nx = (n_knots - start) * D

    def block(i, j):
        a, c = (i - start) * D, (j - start) * D
        return S[a : a + D, c : c + D]

    for n in range(start, n_knots):
        diag[n] = block(n, n)
        if n + 1 < n_knots:
            off[n] = block(n + 1, n)
    landmarks = np.array(
        [S[nx + 2 * i : nx + 2 * i + 2, nx + 2 * i : nx + 2 * i + 2] for i in range(n_landmarks)]
    ).reshape(n_landmarks, 2, 2)
    return InverseBlocks(symmetrize(diag), off, landmarks)


def solve_dense(
    problem: SteamProblem,
    log: MeasurementLog,
    landmarks_init: Optional[Mapping[int, Sequence[float]]] = None,
    callback=None,
) -> SolveReport:
    """Gauss-Newton with an explicit dense kernel; same iteration control as solve()."""
    backend = DenseBackend()
    report = solve(problem, log, landmarks_init, backend=backend, callback=callback)
    logger.debug("dense kernel builds: %s", ", ".join(f"{t:.3g}s" for t in backend.kernel_times))
    return report
