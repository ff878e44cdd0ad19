import numpy as np
import pytest

from conftest import random_arrowhead, random_block_tridiag
from lib.blocklin import (
    ArrowheadSystem,
    BlockTridiagonalSystem,
    chol_arrowhead,
    chol_block_tridiag,
    inverse_blocks,
    solve,
)
from lib.errors import DimensionMismatch, NotPositiveDefinite


def _band(S, n, d):
    diag = np.array([S[k * d : (k + 1) * d, k * d : (k + 1) * d] for k in range(n)])
    off = np.array([S[(k + 1) * d : (k + 2) * d, k * d : (k + 1) * d] for k in range(n - 1)])
    return diag, off


@pytest.mark.parametrize("n,d", [(1, 2), (2, 3), (7, 6), (40, 2)])
def test_factor_reconstructs_system(rng, n, d):
    system = random_block_tridiag(rng, n, d)
    V = chol_block_tridiag(system).to_dense()
    np.testing.assert_allclose(V @ V.T, system.to_dense(), rtol=1e-12, atol=1e-12)
    assert np.allclose(V, np.tril(V))


def test_solve_matches_dense(rng):
    system = random_block_tridiag(rng, 25, 6)
    x = solve(chol_block_tridiag(system), system.rhs)
    np.testing.assert_allclose(x, np.linalg.solve(system.to_dense(), system.rhs), rtol=1e-10)


def test_solve_accepts_matrix_rhs(rng):
    system = random_block_tridiag(rng, 10, 3)
    B = rng.normal(size=(30, 4))
    X = solve(chol_block_tridiag(system), B)
    assert X.shape == (30, 4)
    np.testing.assert_allclose(X, np.linalg.solve(system.to_dense(), B), rtol=1e-10)


def test_inverse_blocks_match_dense_inverse(rng):
    n, d = 12, 4
    system = random_block_tridiag(rng, n, d)
    blocks = inverse_blocks(chol_block_tridiag(system))
    diag, off = _band(np.linalg.inv(system.to_dense()), n, d)
    np.testing.assert_allclose(blocks.diag, diag, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(blocks.offdiag, off, rtol=1e-10, atol=1e-12)
    assert blocks.landmarks.shape == (0, 2, 2)


def test_logdet(rng):
    system = random_block_tridiag(rng, 9, 3)
    sign, expected = np.linalg.slogdet(system.to_dense())
    assert sign > 0
    assert chol_block_tridiag(system).logdet() == pytest.approx(expected, rel=1e-12)


def test_matvec_and_drop_first(rng):
    system = random_block_tridiag(rng, 6, 3)
    x = rng.normal(size=18)
    np.testing.assert_allclose(system.matvec(x), system.to_dense() @ x, rtol=1e-12)
    reduced = system.drop_first()
    assert reduced.n_blocks == 5
    np.testing.assert_array_equal(reduced.to_dense(), system.to_dense()[3:, 3:])
    np.testing.assert_array_equal(reduced.rhs, system.rhs[3:])


def test_arrowhead_solve_and_marginals(rng):
    n, d, L = 15, 6, 4
    system = random_arrowhead(rng, n, d, L, sightings=30)
    W = system.to_dense()
    chol = chol_arrowhead(system)
    V = chol.to_dense()
    np.testing.assert_allclose(V @ V.T, W, rtol=1e-11, atol=1e-11)

    x = solve(chol, system.rhs)
    np.testing.assert_allclose(x, np.linalg.solve(W, system.rhs), rtol=1e-10)

    S = np.linalg.inv(W)
    blocks = inverse_blocks(chol)
    diag, off = _band(S[: n * d, : n * d], n, d)
    np.testing.assert_allclose(blocks.diag, diag, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(blocks.offdiag, off, rtol=1e-9, atol=1e-12)
    nx = n * d
    for i in range(L):
        np.testing.assert_allclose(
            blocks.landmarks[i], S[nx + 2 * i : nx + 2 * i + 2, nx + 2 * i : nx + 2 * i + 2], rtol=1e-9
        )


def test_arrowhead_logdet(rng):
    system = random_arrowhead(rng, 8, 4, 3, sightings=12)
    assert chol_arrowhead(system).logdet() == pytest.approx(np.linalg.slogdet(system.to_dense())[1], rel=1e-11)


def test_duplicate_coupling_entries_are_merged():
    traj = BlockTridiagonalSystem(np.broadcast_to(np.eye(2), (3, 2, 2)).copy())
    block = np.ones((2, 2))
    system = ArrowheadSystem(traj, np.eye(2)[None] * 5, [[0, 1], [0, 1]], [block, block])
    assert system.coupling_index.shape == (1, 2)
    np.testing.assert_array_equal(system.coupling[(0, 1)], 2 * block)


def test_not_positive_definite_reports_block():
    diag = np.broadcast_to(np.eye(2), (5, 2, 2)).copy()
    diag[2] = -np.eye(2)
    with pytest.raises(NotPositiveDefinite) as info:
        chol_block_tridiag(BlockTridiagonalSystem(diag))
    assert info.value.block == 2
    assert info.value.to_dict()["stage"] == "trajectory"


def test_rank_deficient_landmark_block():
    traj = BlockTridiagonalSystem(np.broadcast_to(np.eye(2), (2, 2, 2)).copy())
    system = ArrowheadSystem(traj, np.zeros((1, 2, 2)))
    with pytest.raises(NotPositiveDefinite) as info:
        chol_arrowhead(system)
    assert info.value.stage == "landmark"


def test_shape_checks():
    with pytest.raises(DimensionMismatch):
        BlockTridiagonalSystem(np.zeros((3, 2, 2)), np.zeros((3, 2, 2)))
    with pytest.raises(DimensionMismatch):
        BlockTridiagonalSystem(np.zeros((3, 2, 2)), rhs=np.zeros(5))
    traj = BlockTridiagonalSystem(np.broadcast_to(np.eye(2), (2, 2, 2)).copy())
    with pytest.raises(DimensionMismatch):
        ArrowheadSystem(traj, np.eye(2)[None], [[0, 5]], np.zeros((1, 2, 2)))
    with pytest.raises(DimensionMismatch):
        solve(chol_block_tridiag(traj), np.zeros(3))
