"""
Structured linear algebra for trajectory systems.

Symmetric block-tridiagonal systems (one block per knot) and arrowhead
systems (trajectory blocks bordered by 2x2 landmark blocks), with block
Cholesky factorization, forward/back solves and extraction of the
block-tridiagonal portion of the inverse.

Conventions:
    offdiag[n] is the lower block W[n+1, n]; the upper block is its transpose.
    BlockCholesky.offdiag[n] is the lower factor block V[n+1, n].
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, NamedTuple, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cholesky, lapack, solve_triangular

from lib.config import CONFIG
from lib.errors import DimensionMismatch, NotPositiveDefinite

logger = logging.getLogger(__name__)


@dataclass
class BlockTridiagonalSystem:
    """Symmetric block-tridiagonal matrix W plus an optional right-hand side."""

    diag: np.ndarray
    offdiag: Optional[np.ndarray] = None
    rhs: Optional[np.ndarray] = None

    def __post_init__(self):
        self.diag = np.asarray(self.diag, dtype=float)
        if self.diag.ndim != 3 or self.diag.shape[1] != self.diag.shape[2]:
            raise DimensionMismatch(f"diag must be (n, d, d), got {self.diag.shape}")
        n, d = self.diag.shape[0], self.diag.shape[1]
        if n < 1:
            raise DimensionMismatch("system needs at least one block")
        if self.offdiag is None:
            self.offdiag = np.zeros((n - 1, d, d))
        self.offdiag = np.asarray(self.offdiag, dtype=float).reshape(-1, d, d)
        if self.offdiag.shape[0] != n - 1:
            raise DimensionMismatch(
                f"expected {n - 1} off-diagonal blocks, got {self.offdiag.shape[0]}"
            )
        if self.rhs is None:
            self.rhs = np.zeros(n * d)
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        if self.rhs.size != n * d:
            raise DimensionMismatch(f"rhs length {self.rhs.size} != {n * d}")

    @classmethod
    def zeros(cls, n_blocks: int, block_dim: int) -> "BlockTridiagonalSystem":
        return cls(
            np.zeros((n_blocks, block_dim, block_dim)),
            np.zeros((max(n_blocks - 1, 0), block_dim, block_dim)),
            np.zeros(n_blocks * block_dim),
        )

    @property
    def n_blocks(self) -> int:
        return self.diag.shape[0]

    @property
    def block_dim(self) -> int:
        return self.diag.shape[1]

    @property
    def size(self) -> int:
        return self.n_blocks * self.block_dim

    def to_dense(self) -> np.ndarray:
        d = self.block_dim
        W = np.zeros((self.size, self.size))
        for n in range(self.n_blocks):
            W[n * d : (n + 1) * d, n * d : (n + 1) * d] = self.diag[n]
        for n in range(self.n_blocks - 1):
            lower = self.offdiag[n]
            W[(n + 1) * d : (n + 2) * d, n * d : (n + 1) * d] = lower
            W[n * d : (n + 1) * d, (n + 1) * d : (n + 2) * d] = lower.T
        return W

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """W x without forming W."""
        n, d = self.n_blocks, self.block_dim
        X = np.asarray(x, dtype=float).reshape(n, d)
        out = np.einsum("nij,nj->ni", self.diag, X)
        if n > 1:
            out[1:] += np.einsum("nij,nj->ni", self.offdiag, X[:-1])
            out[:-1] += np.einsum("nji,nj->ni", self.offdiag, X[1:])
        return out.ravel()

    def drop_first(self) -> "BlockTridiagonalSystem":
        """Eliminate block 0 (a locked state): remove its rows and columns."""
        d = self.block_dim
        return BlockTridiagonalSystem(
            self.diag[1:].copy(), self.offdiag[1:].copy(), self.rhs[d:].copy()
        )

    def max_diagonal(self) -> float:
        return float(np.max(np.diagonal(self.diag, axis1=1, axis2=2), initial=0.0))


@dataclass
class ArrowheadSystem:
    """STEAM normal equations: trajectory block, landmark blocks and coupling.

    Coupling is stored sparsely as parallel arrays: coupling_index[e] holds
    (landmark, knot) and coupling_blocks[e] the 2 x block_dim block W_lx.
    Duplicate pairs are merged on construction.
    """

    traj: BlockTridiagonalSystem
    lm_diag: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 2)))
    coupling_index: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    coupling_blocks: Optional[np.ndarray] = None
    rhs_lm: Optional[np.ndarray] = None

    def __post_init__(self):
        d = self.traj.block_dim
        self.lm_diag = np.asarray(self.lm_diag, dtype=float).reshape(-1, 2, 2)
        L = self.lm_diag.shape[0]
        if self.rhs_lm is None:
            self.rhs_lm = np.zeros(2 * L)
        self.rhs_lm = np.asarray(self.rhs_lm, dtype=float).ravel()
        if self.rhs_lm.size != 2 * L:
            raise DimensionMismatch(f"landmark rhs length {self.rhs_lm.size} != {2 * L}")
        index = np.asarray(self.coupling_index, dtype=int).reshape(-1, 2)
        blocks = (
            np.zeros((0, 2, d))
            if self.coupling_blocks is None
            else np.asarray(self.coupling_blocks, dtype=float).reshape(-1, 2, d)
        )
        if index.shape[0] != blocks.shape[0]:
            raise DimensionMismatch("coupling index and blocks differ in length")
        if index.size and (
            index[:, 0].min() < 0
            or index[:, 0].max() >= L
            or index[:, 1].min() < 0
            or index[:, 1].max() >= self.traj.n_blocks
        ):
            raise DimensionMismatch("coupling entry outside the system")
        if index.shape[0]:
            unique, inverse = np.unique(index, axis=0, return_inverse=True)
            merged = np.zeros((unique.shape[0], 2, d))
            np.add.at(merged, inverse.ravel(), blocks)
            index, blocks = unique, merged
        self.coupling_index = index
        self.coupling_blocks = blocks

    @classmethod
    def from_map(
        cls,
        traj: BlockTridiagonalSystem,
        lm_diag: np.ndarray,
        coupling: Mapping[Tuple[int, int], np.ndarray],
        rhs_lm: Optional[np.ndarray] = None,
    ) -> "ArrowheadSystem":
        keys = list(coupling.keys())
        d = traj.block_dim
        blocks = np.array([coupling[k] for k in keys]).reshape(-1, 2, d)
        return cls(traj, lm_diag, np.array(keys, dtype=int).reshape(-1, 2), blocks, rhs_lm)

    @property
    def n_landmarks(self) -> int:
        return self.lm_diag.shape[0]

    @property
    def rhs_traj(self) -> np.ndarray:
        return self.traj.rhs

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.traj.rhs, self.rhs_lm])

    @property
    def coupling(self) -> Dict[Tuple[int, int], np.ndarray]:
        return {
            (int(i), int(n)): block
            for (i, n), block in zip(self.coupling_index, self.coupling_blocks)
        }

    def max_diagonal(self) -> float:
        lm = np.max(np.diagonal(self.lm_diag, axis1=1, axis2=2), initial=0.0)
        return max(self.traj.max_diagonal(), float(lm))

    def coupling_columns(self) -> np.ndarray:
        """W_xl arranged per knot: array (n_blocks, block_dim, 2L)."""
        d = self.traj.block_dim
        out = np.zeros((self.traj.n_blocks, d, 2 * self.n_landmarks))
        for (i, n), block in zip(self.coupling_index, self.coupling_blocks):
            out[n, :, 2 * i : 2 * i + 2] += block.T
        return out

    def to_dense(self) -> np.ndarray:
        nx = self.traj.size
        L = self.n_landmarks
        W = np.zeros((nx + 2 * L, nx + 2 * L))
        W[:nx, :nx] = self.traj.to_dense()
        for i in range(L):
            W[nx + 2 * i : nx + 2 * i + 2, nx + 2 * i : nx + 2 * i + 2] = self.lm_diag[i]
        Wxl = self.coupling_columns().reshape(nx, 2 * L)
        W[:nx, nx:] = Wxl
        W[nx:, :nx] = Wxl.T
        return W


@dataclass
class BlockCholesky:
    """Lower block factor V with V V^T = W.

    diag/offdiag are the bidiagonal trajectory factor V_xx; diag_inv caches
    the inverses of its diagonal blocks. For arrowhead systems lm_coupling
    holds V_lx as a dense (2L, n*d) array and lm_factor the dense V_ll.
    """

    diag: np.ndarray
    offdiag: np.ndarray
    diag_inv: np.ndarray
    lm_coupling: Optional[np.ndarray] = None
    lm_factor: Optional[np.ndarray] = None

    @property
    def n_blocks(self) -> int:
        return self.diag.shape[0]

    @property
    def block_dim(self) -> int:
        return self.diag.shape[1]

    @property
    def n_landmarks(self) -> int:
        return 0 if self.lm_factor is None else self.lm_factor.shape[0] // 2

    @property
    def size(self) -> int:
        return self.n_blocks * self.block_dim + 2 * self.n_landmarks

    def logdet(self) -> float:
        """log|W| from the factor diagonals."""
        total = 2.0 * np.sum(np.log(np.diagonal(self.diag, axis1=1, axis2=2)))
        if self.lm_factor is not None:
            total += 2.0 * np.sum(np.log(np.diag(self.lm_factor)))
        return float(total)

    def to_dense(self) -> np.ndarray:
        d = self.block_dim
        nx = self.n_blocks * d
        V = np.zeros((self.size, self.size))
        for n in range(self.n_blocks):
            V[n * d : (n + 1) * d, n * d : (n + 1) * d] = self.diag[n]
        for n in range(self.n_blocks - 1):
            V[(n + 1) * d : (n + 2) * d, n * d : (n + 1) * d] = self.offdiag[n]
        if self.lm_factor is not None:
            V[nx:, :nx] = self.lm_coupling
            V[nx:, nx:] = self.lm_factor
        return V


class InverseBlocks(NamedTuple):
    """Block-tridiagonal portion of W^-1 plus landmark marginal blocks."""

    diag: np.ndarray
    offdiag: np.ndarray
    landmarks: np.ndarray


def _pivot_tolerance(max_diag: float) -> float:
    return CONFIG.PIVOT_RTOL * max(max_diag, np.finfo(float).tiny)


def _chol_block(S: np.ndarray, index: int, tol: float) -> np.ndarray:
    S = 0.5 * (S + S.T)
    try:
        V = cholesky(S, lower=True, check_finite=False)
    except LinAlgError as e:
        raise NotPositiveDefinite(index, "trajectory", str(e)) from None
    pivots = np.diag(V) ** 2
    if not np.all(np.isfinite(pivots)) or pivots.min() < tol:
        raise NotPositiveDefinite(index, "trajectory", "pivot below tolerance")
    return V


def chol_block_tridiag(
    system: BlockTridiagonalSystem, max_diag: Optional[float] = None
) -> BlockCholesky:
    """Factor a symmetric block-tridiagonal system in O(n_blocks).

    Args:
        system: The block-tridiagonal matrix to factor.
        max_diag: Scale for the pivot tolerance; defaults to the largest
            diagonal entry of the system.

    Returns:
        BlockCholesky with lower bidiagonal blocks.
    """
    n, d = system.n_blocks, system.block_dim
    tol = _pivot_tolerance(system.max_diagonal() if max_diag is None else max_diag)
    eye = np.eye(d)
    D = np.empty((n, d, d))
    Dinv = np.empty((n, d, d))
    E = np.empty((max(n - 1, 0), d, d))
    for k in range(n):
        S = system.diag[k]
        if k > 0:
            E[k - 1] = system.offdiag[k - 1] @ Dinv[k - 1].T
            S = S - E[k - 1] @ E[k - 1].T
        D[k] = _chol_block(S, k, tol)
        Dinv[k] = solve_triangular(D[k], eye, lower=True, check_finite=False)
    return BlockCholesky(D, E, Dinv)


def _forward(chol: BlockCholesky, B: np.ndarray) -> np.ndarray:
    """Solve V_xx Z = B for B shaped (n_blocks, d, k)."""
    Z = np.empty_like(B)
    for k in range(chol.n_blocks):
        r = B[k] if k == 0 else B[k] - chol.offdiag[k - 1] @ Z[k - 1]
        Z[k] = chol.diag_inv[k] @ r
    return Z


def _backward(chol: BlockCholesky, B: np.ndarray) -> np.ndarray:
    """Solve V_xx^T Y = B for B shaped (n_blocks, d, k)."""
    Y = np.empty_like(B)
    last = chol.n_blocks - 1
    for k in range(last, -1, -1):
        r = B[k] if k == last else B[k] - chol.offdiag[k].T @ Y[k + 1]
        Y[k] = chol.diag_inv[k].T @ r
    return Y


def solve(chol: BlockCholesky, rhs: np.ndarray) -> np.ndarray:
    """Solve W x = rhs using the block factor (forward then backward pass).

    Accepts a vector or a matrix of right-hand sides (one per column).
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != chol.size:
        raise DimensionMismatch(f"rhs length {rhs.shape[0]} != system size {chol.size}")
    vector = rhs.ndim == 1
    R = rhs.reshape(chol.size, -1)
    n, d = chol.n_blocks, chol.block_dim
    nx = n * d
    z = _forward(chol, R[:nx].reshape(n, d, -1))
    y_lm = None
    if chol.n_landmarks:
        z_lm = solve_triangular(
            chol.lm_factor, R[nx:] - chol.lm_coupling @ z.reshape(nx, -1), lower=True
        )
        y_lm = solve_triangular(chol.lm_factor, z_lm, lower=True, trans="T")
        z = z - (chol.lm_coupling.T @ y_lm).reshape(n, d, -1)
    y = _backward(chol, z).reshape(nx, -1)
    if y_lm is not None:
        y = np.vstack([y, y_lm])
    return y.ravel() if vector else y


def chol_arrowhead(system: ArrowheadSystem) -> BlockCholesky:
    """Three-stage arrowhead factorization.

    V_xx from W_xx, then V_lx from V_lx V_xx^T = W_lx, then
    V_ll = chol(W_ll - V_lx V_lx^T). Never forms W_xx^-1.
    """
    max_diag = system.max_diagonal()
    chol = chol_block_tridiag(system.traj, max_diag=max_diag)
    L = system.n_landmarks
    if L == 0:
        return chol
    n, d = chol.n_blocks, chol.block_dim
    Z = _forward(chol, system.coupling_columns())
    V_lx = Z.reshape(n * d, 2 * L).T

    W_ll = np.zeros((2 * L, 2 * L))
    for i in range(L):
        W_ll[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = system.lm_diag[i]
    S = W_ll - V_lx @ V_lx.T
    S = 0.5 * (S + S.T)
    V_ll, info = lapack.dpotrf(S, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefinite((info - 1) // 2, "landmark", "reduced landmark block")
    if info < 0:
        raise NotPositiveDefinite(0, "landmark", f"dpotrf argument {-info}")
    pivots = np.diag(V_ll) ** 2
    bad = np.flatnonzero(pivots < _pivot_tolerance(max_diag))
    if bad.size:
        raise NotPositiveDefinite(int(bad[0]) // 2, "landmark", "pivot below tolerance")
    logger.debug("arrowhead factor: %d knots, %d landmarks", n, L)
    return BlockCholesky(chol.diag, chol.offdiag, chol.diag_inv, V_lx, np.tril(V_ll))


def inverse_blocks(chol: BlockCholesky) -> InverseBlocks:
    """Block-tridiagonal portion of W^-1 by backward covariance recursion.

    For arrowhead factors the trajectory blocks are those of the full
    inverse (landmarks marginalized) and the landmark 2x2 marginals are
    returned alongside.
    """
    n, d = chol.n_blocks, chol.block_dim
    Dinv = chol.diag_inv
    diag = np.empty((n, d, d))
    off = np.empty((max(n - 1, 0), d, d))
    diag[n - 1] = Dinv[n - 1].T @ Dinv[n - 1]
    for k in range(n - 2, -1, -1):
        upper = -Dinv[k].T @ chol.offdiag[k].T @ diag[k + 1]
        off[k] = upper.T
        diag[k] = Dinv[k].T @ (Dinv[k] - chol.offdiag[k].T @ off[k])
    landmarks = np.zeros((0, 2, 2))
    if chol.n_landmarks:
        L = chol.n_landmarks
        V_ll_inv = solve_triangular(chol.lm_factor, np.eye(2 * L), lower=True)
        G = (chol.lm_coupling.T @ V_ll_inv.T).reshape(n, d, 2 * L)
        M = _backward(chol, G)
        diag += np.einsum("nik,njk->nij", M, M)
        off += np.einsum("nik,njk->nij", M[1:], M[:-1])
        S_inv = V_ll_inv.T @ V_ll_inv
        landmarks = np.array([S_inv[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] for i in range(L)])
    diag = 0.5 * (diag + np.swapaxes(diag, 1, 2))
    return InverseBlocks(diag, off, landmarks)
