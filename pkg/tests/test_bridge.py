import numpy as np
import pytest
from hypothesis import given, strategies as st
from src.bridge import MomentStats, estimate_moments, forward_map, precond, sample_xt, zhat
from src.errors import (
    DegenerateInputError,
    DomainError,
    ShapeMismatchError,
    SingularityError,
)
from src.schedule import LinearSchedule

interior = st.floats(0.01, 0.99, allow_nan=False)


def test_sample_xt_at_endpoints_is_exact(sched, rng):
    x0, x1 = np.array([0.2, -1.0]), np.array([0.7, 3.0])
    np.testing.assert_array_equal(sample_xt(x0, x1, 0.0, sched, rng), x0)
    np.testing.assert_array_equal(sample_xt(x0, x1, 1.0, sched, rng), x1)


def test_sample_xt_shape_mismatch(sched, rng):
    with pytest.raises(ShapeMismatchError):
        sample_xt(np.zeros(3), np.zeros(4), 0.5, sched, rng)


@pytest.mark.slow
def test_kernel_moments_match_within_four_standard_errors(sched):
    rng = np.random.default_rng(0)
    n = 100_000
    for _ in range(20):
        x0, x1, t = rng.normal(), rng.normal(), rng.uniform(0.02, 0.98)
        draws = sample_xt(np.full(n, x0), np.full(n, x1), t, sched, rng)
        alpha, beta, gamma_sq = sched.coefficients(t)
        assert abs(draws.mean() - (alpha * x0 + beta * x1)) < 4 * np.sqrt(gamma_sq / n)
        assert abs(draws.var(ddof=1) - gamma_sq) < 4 * gamma_sq * np.sqrt(2 / (n - 1))


def test_zhat_recovers_noise(sched):
    rng = np.random.default_rng(1)
    x0, x1, noise = rng.normal(size=(3, 50))
    xt = forward_map(x0, x1, 0.3, sched, noise)
    np.testing.assert_allclose(zhat(xt, x0, x1, 0.3, sched), noise, atol=1e-10)


@pytest.mark.parametrize("t", [0.0, 1.0])
def test_zhat_singular_where_gamma_vanishes(sched, t):
    with pytest.raises(SingularityError):
        zhat(np.zeros(2), np.zeros(2), np.zeros(2), t, sched)


def test_forward_map_accepts_batch_times(sched):
    x0 = np.zeros((4, 3))
    x1 = np.ones((4, 3))
    t = np.array([0.0, 0.25, 0.5, 1.0])
    xt = forward_map(x0, x1, t, sched, np.zeros((4, 3)))
    np.testing.assert_allclose(xt, np.repeat(t[:, None], 3, axis=1))


def test_precond_golden_values(sched):
    moments = MomentStats(1.0, 1.0, 0.0)
    c = precond(0.5, sched, moments)
    assert c.c_in == pytest.approx(1.392621, abs=1e-6)
    assert c.c_skip == pytest.approx(0.969697, abs=1e-6)
    assert c.c_out == pytest.approx(0.717741, abs=1e-6)
    assert c.c_noise == pytest.approx(-0.173287, abs=1e-6)
    assert c.loss_weight * c.c_out**2 == pytest.approx(1.0, abs=1e-12)


@given(interior)
def test_loss_weight_inverts_c_out(t):
    c = precond(t, LinearSchedule(), MomentStats(1.0, 2.0, 0.3))
    assert c.loss_weight * c.c_out**2 == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("t", [0.0, 1.0, 1.5])
def test_precond_domain(sched, t):
    with pytest.raises(DomainError):
        precond(t, sched, MomentStats(1.0, 1.0, 0.0))


@pytest.mark.slow
def test_c_in_normalizes_variance(sched, params):
    rng = np.random.default_rng(2)
    x0, x1 = params.sample(100_000, rng)
    for t in np.linspace(0.05, 0.95, 10):
        xt = sample_xt(x0, x1, t, sched, rng)
        scaled = precond(t, sched, params.moments()).c_in * xt
        assert scaled.var() == pytest.approx(1.0, abs=0.02)


def test_precond_array_time(sched):
    c = precond(np.array([0.25, 0.5]), sched, MomentStats(1.0, 1.0, 0.0))
    assert c.c_in.shape == (2,)
    assert c.c_in[1] == pytest.approx(1.392621, abs=1e-6)


def test_estimate_moments_pooled(rng):
    pairs = [(rng.normal(size=5), rng.normal(size=5)) for _ in range(4)]
    m = estimate_moments(pairs)
    a = np.concatenate([p[0] for p in pairs])
    b = np.concatenate([p[1] for p in pairs])
    assert m.sigma0_sq == pytest.approx(a.var(ddof=1))
    assert m.sigma1_sq == pytest.approx(b.var(ddof=1))
    assert m.sigma01 == pytest.approx(np.cov(a, b)[0, 1])


def test_estimate_moments_needs_two_pairs():
    with pytest.raises(DegenerateInputError):
        estimate_moments([(np.ones(3), np.ones(3))])


def test_moment_stats_cauchy_schwarz():
    with pytest.raises(DomainError):
        MomentStats(1.0, 1.0, 1.5)
    with pytest.raises(DomainError):
        MomentStats(-1.0, 1.0, 0.0)


def test_estimate_moments_hand_computed():
    m = estimate_moments([(np.array([0.0]), np.array([0.0])), (np.array([1.0]), np.array([1.0]))])
    assert (m.sigma0_sq, m.sigma1_sq, m.sigma01) == (0.5, 0.5, 0.5)


def test_c_in_matches_xt_variance(sched):
    moments = MomentStats(1.3, 0.7, 0.4)
    t = np.linspace(0.01, 0.99, 100)
    alpha, beta, gamma_sq = sched.coefficients(t)
    expected = alpha**2 * 1.3 + beta**2 * 0.7 + 2 * alpha * beta * 0.4 + gamma_sq
    np.testing.assert_allclose(precond(t, sched, moments).c_in ** -2, expected, rtol=1e-12)
