import numpy as np
import pytest

from lib.baseline import (
    DenseBackend,
    dense_blocks,
    dense_inverse_kernel,
    dense_kernel,
    lifted_transition,
    solve_dense,
)
from lib.commands import problem_for_dataset
from lib.estimator import _build, _MeasurementModel, assemble_system, solve
from lib.priors import LtiConstVel, Matern32, NtvBodyConstVel, build_prior, make_prior_kind


@pytest.mark.parametrize("n", [3, 5, 10])
@pytest.mark.parametrize("kind", [LtiConstVel(qc=(0.4, 0.3, 0.2)), Matern32(length_scale=2.0)], ids=["lti", "matern"])
def test_inverse_kernel_is_exactly_block_tridiagonal(rng, n, kind):
    times = np.cumsum(rng.uniform(0.1, 1.5, size=n))
    p0 = np.eye(6) if kind.name == "lti" else None
    prior = build_prior(kind, times, lock_first=False, p0=p0)
    dense_inv = np.linalg.inv(dense_kernel(prior, free_only=False))
    sparse = prior.inverse_kernel().to_dense()
    np.testing.assert_allclose(dense_inv, sparse, atol=1e-8 * np.abs(sparse).max())
    # blocks outside the band vanish
    for i in range(n):
        for j in range(n):
            if abs(i - j) > 1:
                assert np.abs(dense_inv[6 * i : 6 * i + 6, 6 * j : 6 * j + 6]).max() < 1e-8 * np.abs(sparse).max()


def test_locked_inverse_kernel_matches_dense(rng):
    times = np.cumsum(rng.uniform(0.2, 1.0, size=8))
    prior = build_prior(NtvBodyConstVel(), times, x0=np.array([0, 0, 0.3, 1.0, 0.0, 0.2]))
    sparse = prior.inverse_kernel().to_dense()
    np.testing.assert_allclose(dense_inverse_kernel(prior), sparse, rtol=1e-7, atol=1e-8 * np.abs(sparse).max())


def test_matern_dense_kernel_entries_are_kernel_values():
    kind = Matern32(length_scale=1.5, sigma=0.8)
    times = np.array([0.0, 0.3, 1.1, 2.0, 4.5])
    prior = build_prior(kind, times, lock_first=False)
    P = dense_kernel(prior, free_only=False)
    for i, ti in enumerate(times):
        for j, tj in enumerate(times):
            expected = 0.64 * (1 + np.sqrt(3) * abs(ti - tj) / 1.5) * np.exp(-np.sqrt(3) * abs(ti - tj) / 1.5)
            assert P[6 * i, 6 * j] == pytest.approx(expected, rel=1e-6)


def test_lifted_transition_blocks():
    prior = build_prior(LtiConstVel(), [0.0, 1.0, 3.0])
    F = lifted_transition(prior)
    np.testing.assert_allclose(F[12:18, 0:6], prior.trans[1] @ prior.trans[0])
    np.testing.assert_array_equal(F[0:6, 6:12], 0.0)


@pytest.mark.parametrize("name", ["lti", "ntv"])
def test_assembled_system_matches_dense(small_dataset, name):
    problem, log = problem_for_dataset(small_dataset, make_prior_kind(name, [0.01, 0.01, 0.005]))
    prior = _build(problem)
    ids = log.landmark_ids()
    rows = {lm: row for row, lm in enumerate(ids)}
    landmarks = small_dataset.truth.landmarks[ids] + 0.1
    knots = prior.mean.copy()
    knots[1:] += 0.01
    lin = _MeasurementModel(log, rows, problem).linearize(prior, knots, landmarks)
    system, cost = assemble_system(prior, lin, knots, len(ids))
    H, b = DenseBackend()._system(prior, lin, knots, len(ids))
    np.testing.assert_allclose(system.to_dense(), H, rtol=1e-7, atol=1e-8 * np.abs(H).max())
    np.testing.assert_allclose(system.rhs, b, rtol=1e-7, atol=1e-8 * np.abs(b).max())
    assert cost == pytest.approx(prior.cost(knots) + lin.cost())


def test_dense_blocks_cut_band():
    S = np.arange(16.0).reshape(4, 4)
    S = S + S.T
    blocks = dense_blocks(S, n_knots=3, state_dim=2, n_landmarks=0, locked=True)
    np.testing.assert_array_equal(blocks.diag[0], 0.0)
    np.testing.assert_array_equal(blocks.diag[2], S[2:, 2:])
    np.testing.assert_array_equal(blocks.offdiag[1], S[2:, :2])


def test_dense_solver_matches_sparse(small_dataset):
    problem, log = problem_for_dataset(small_dataset, make_prior_kind("lti", [0.01, 0.01, 0.005]))
    sparse = solve(problem, log)
    dense = solve_dense(problem, log)
    assert dense.iterations == sparse.iterations
    np.testing.assert_allclose(dense.knots, sparse.knots, rtol=1e-8, atol=1e-8)
    np.testing.assert_allclose(dense.cov.diag, sparse.cov.diag, rtol=1e-6, atol=1e-10)
    for lm_id, xy in sparse.landmarks.items():
        np.testing.assert_allclose(dense.landmarks[lm_id], xy, atol=1e-8)
