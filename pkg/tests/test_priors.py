import numpy as np
import pytest

from lib.baseline import dense_kernel
from lib.errors import (
    ConfigError,
    DegenerateInterval,
    DimensionMismatch,
    NegativeInterval,
    NonMonotonicTimes,
)
from lib.priors import (
    KnotState,
    LtiConstVel,
    Matern32,
    NtvBodyConstVel,
    build_prior,
    cv_noise,
    cv_transition,
    make_prior_kind,
    matern_kernel_value,
    noise_block,
    transition,
)


@pytest.mark.parametrize("factor", [0.0, 0.5, 1.0, 2.0, 5.0])
def test_matern_cross_covariance_matches_kernel(factor):
    kind = Matern32(length_scale=2.5, sigma=1.7)
    lag = factor * kind.length_scale
    value = kind.stationary_cross_covariance(lag)[0, 0]
    assert value == pytest.approx(matern_kernel_value(1.7, 2.5, lag), rel=1e-6)


def test_matern_default_qc():
    kind = Matern32(length_scale=2.0, sigma=0.5, dof_count=2)
    lam = np.sqrt(3.0) / 2.0
    assert kind.qc == pytest.approx((4 * 0.25 * lam**3,) * 2)
    assert kind.dof == 2


def test_matern_noise_long_interval_is_stationary():
    kind = Matern32(length_scale=0.1)
    Q = kind.noise(np.array([50.0]))[0]
    np.testing.assert_allclose(Q, kind.stationary_covariance(), rtol=1e-9, atol=1e-12)


def test_lti_closed_form():
    kind = LtiConstVel(qc=(2.0, 3.0))
    assert kind.state_dim == 4
    Phi = kind.transitions(np.array([0.5]))[0]
    expected = np.eye(4)
    expected[0, 2] = expected[1, 3] = 0.5
    np.testing.assert_array_equal(Phi, expected)
    Q = kind.noise(np.array([2.0]))[0]
    assert Q[0, 0] == pytest.approx(2.0 * 8.0 / 3.0)
    assert Q[1, 3] == pytest.approx(3.0 * 2.0)
    np.testing.assert_allclose(kind.noise_inverse(np.array([2.0]))[0] @ Q, np.eye(4), atol=1e-12)


def test_lti_integration_matches_closed_form():
    kind = LtiConstVel(qc=(0.3, 0.2, 0.1))
    times = np.array([0.0, 0.4, 1.5, 1.6, 3.0])
    closed = build_prior(kind, times)
    numeric = build_prior(kind, times, integrate=True)
    assert numeric.uses_integration()
    np.testing.assert_allclose(numeric.trans, closed.trans, atol=1e-10)
    np.testing.assert_allclose(numeric.q, closed.q, atol=1e-10)
    np.testing.assert_allclose(numeric.offset, 0.0, atol=1e-12)


def test_matern_integration_matches_closed_form():
    kind = Matern32(length_scale=1.5, sigma=2.0)
    times = np.array([0.0, 0.7, 1.0, 2.5])
    closed = build_prior(kind, times)
    numeric = build_prior(kind, times, integrate=True, step=0.01)
    np.testing.assert_allclose(numeric.trans, closed.trans, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(numeric.q, closed.q, rtol=1e-6, atol=1e-9)


def test_transition_and_noise_block_errors():
    kind = LtiConstVel()
    np.testing.assert_array_equal(transition(kind, None, 1.0, 1.0), np.eye(6))
    np.testing.assert_allclose(transition(kind, None, 2.0, 1.5), cv_transition(np.array([0.5]), 3)[0])
    with pytest.raises(NegativeInterval):
        transition(kind, None, 1.0, 2.0)
    with pytest.raises(NegativeInterval):
        noise_block(kind, None, 2.0, 1.0)
    with pytest.raises(DegenerateInterval):
        noise_block(kind, None, 1.0, 1.0)
    Q, Qinv = noise_block(kind, None, 0.0, 2.0)
    np.testing.assert_allclose(Q, cv_noise(np.array([2.0]), kind.qc_diag)[0])
    np.testing.assert_allclose(Q @ Qinv, np.eye(6), atol=1e-10)


def test_ntv_transition_needs_operating_trajectory():
    with pytest.raises(ConfigError):
        transition(NtvBodyConstVel(), None, 1.0, 0.0)


def test_ntv_straight_line_mean():
    x0 = np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    prior = build_prior(NtvBodyConstVel(), np.linspace(0.0, 4.0, 5), x0=x0)
    np.testing.assert_allclose(prior.mean[:, 0], np.linspace(0.0, 4.0, 5), atol=1e-10)
    np.testing.assert_allclose(prior.mean[:, 1:3], 0.0, atol=1e-10)
    np.testing.assert_allclose(prior.mean[:, 3:], np.tile(x0[3:], (5, 1)), atol=1e-12)


def test_ntv_transition_along_turn():
    def op(t):
        # turning in place at 0.5 rad/s
        state = np.zeros((np.size(t), 6))
        state[:, 2] = 0.5 * np.asarray(t)
        state[:, 5] = 0.5
        return state

    Phi = transition(NtvBodyConstVel(), op, 2.0, 0.0, step=0.01)
    # dx/dv integrates cos(theta(t)) over the interval
    assert Phi[0, 3] == pytest.approx(2.0 * np.sin(1.0), rel=1e-6)
    assert Phi[1, 3] == pytest.approx(2.0 * (1.0 - np.cos(1.0)), rel=1e-6)
    assert Phi[2, 5] == pytest.approx(2.0)


def test_build_prior_rejects_bad_times():
    with pytest.raises(NonMonotonicTimes) as info:
        build_prior(LtiConstVel(), [0.0, 1.0, 1.0, 2.0])
    assert info.value.index == 2
    with pytest.raises(NonMonotonicTimes):
        build_prior(LtiConstVel(), [0.0, 2.0, 1.0])
    with pytest.raises(DegenerateInterval):
        build_prior(LtiConstVel(), [0.0, 1e-12])
    with pytest.raises(DimensionMismatch):
        build_prior(LtiConstVel(), [0.0, 1.0], x0=np.zeros(4))
    with pytest.raises(ConfigError):
        build_prior(LtiConstVel(), [0.0, 1.0], lock_first=False)


def test_single_knot_prior():
    prior = build_prior(LtiConstVel(), [3.0], x0=np.ones(6), lock_first=False, p0=np.eye(6))
    assert prior.n_intervals == 0
    np.testing.assert_array_equal(prior.mean, np.ones((1, 6)))
    assert prior.inverse_kernel().n_blocks == 1


@pytest.mark.parametrize(
    "kind",
    [LtiConstVel(qc=(0.5, 0.2, 0.1)), Matern32(length_scale=3.0)],
    ids=["lti", "matern"],
)
def test_cost_and_rhs_match_dense_kernel(rng, kind):
    times = np.cumsum(rng.uniform(0.2, 1.0, size=6))
    x0 = rng.normal(size=6)
    p0 = np.diag(rng.uniform(0.5, 2.0, size=6))
    prior = build_prior(kind, times, x0=x0, p0=p0, lock_first=False)
    P = dense_kernel(prior, free_only=False)
    x = prior.mean.ravel() + rng.normal(scale=0.3, size=prior.mean.size)
    d = x - prior.mean.ravel()
    knots = x.reshape(prior.mean.shape)
    assert prior.cost(knots) == pytest.approx(0.5 * d @ np.linalg.solve(P, d), rel=1e-9)
    system = prior.normal_equations(knots)
    np.testing.assert_allclose(system.rhs, np.linalg.solve(P, -d), rtol=1e-7, atol=1e-9)
    np.testing.assert_allclose(system.to_dense(), np.linalg.inv(P), rtol=1e-7, atol=1e-9)


def test_marginals_match_dense_diagonal():
    kind = LtiConstVel(qc=(1.0, 1.0, 1.0))
    prior = build_prior(kind, [0.0, 1.0, 3.0], lock_first=False, p0=np.eye(6))
    P = dense_kernel(prior, free_only=False)
    for n in range(3):
        np.testing.assert_allclose(prior.marginals[n], P[6 * n : 6 * n + 6, 6 * n : 6 * n + 6])


def test_with_qc_rescales_noise():
    times = np.array([0.0, 0.5, 2.0, 2.2])
    prior = build_prior(LtiConstVel(qc=(1.0, 1.0, 1.0)), times)
    scaled = prior.with_qc([0.2, 0.4, 0.8])
    expected = build_prior(LtiConstVel(qc=(0.2, 0.4, 0.8)), times)
    np.testing.assert_allclose(scaled.q, expected.q, rtol=1e-12)
    np.testing.assert_allclose(scaled.qinv, expected.qinv, rtol=1e-9)
    assert scaled.kind.qc == (0.2, 0.4, 0.8)


def test_noise_basis_shape():
    prior = build_prior(NtvBodyConstVel(qc=(0.1, 0.2, 0.3)), [0.0, 1.0, 2.0],
                        x0=np.array([0, 0, 0, 1.0, 0, 0.2]))
    basis = prior.noise_basis()
    assert basis.shape == (3, 2, 6, 6)
    np.testing.assert_allclose(np.einsum("i,inab->nab", prior.qc, basis), prior.q, rtol=1e-9, atol=1e-14)


def test_make_prior_kind():
    assert isinstance(make_prior_kind("lti", [1, 2, 3]), LtiConstVel)
    assert make_prior_kind("matern", length_scale=2.0).length_scale == 2.0
    assert make_prior_kind("ntv").velocity_convention == "body"
    with pytest.raises(ConfigError):
        make_prior_kind("cubic")
    with pytest.raises(ConfigError):
        make_prior_kind("lti", [1.0, -1.0, 1.0])
    with pytest.raises(ConfigError):
        make_prior_kind("ntv", [1.0, 1.0])


def test_knot_state_vector():
    state = KnotState.from_vector([1, 2, 3, 4, 5, 6], "body")
    np.testing.assert_array_equal(state.velocity, [4, 5, 6])
    np.testing.assert_array_equal(state.to_vector(), np.arange(1, 7))
    with pytest.raises(DimensionMismatch):
        KnotState.from_vector([1, 2, 3])


def test_ntv_transition_composes():
    def op(t):
        t = np.asarray(t, dtype=float)
        state = np.zeros((t.size, 6))
        state[:, 0] = 2.0 * np.sin(0.4 * t)
        state[:, 1] = 1.0 - np.cos(0.4 * t)
        state[:, 2] = 0.4 * t + 0.1 * np.sin(t)
        state[:, 3] = 0.8 + 0.1 * t
        state[:, 4] = 0.05 * np.cos(t)
        state[:, 5] = 0.4 + 0.1 * np.cos(t)
        return state

    kind = NtvBodyConstVel()
    t0, t1, t2 = 0.0, 0.7, 2.0
    whole = transition(kind, op, t2, t0, step=0.01)
    chained = transition(kind, op, t2, t1, step=0.01) @ transition(kind, op, t1, t0, step=0.01)
    np.testing.assert_allclose(whole, chained, rtol=1e-7, atol=1e-9)
    assert not np.allclose(whole, np.eye(6))
