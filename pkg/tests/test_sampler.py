import numpy as np
import pytest
from src.data.volume import Modality, Resampling, Volume, downsample, upsample
from src.denoiser import AnalyticPosterior, Denoiser
from src.errors import DomainError, NumericalError, SingularityError
from src.sampler import (
    SamplerConfig,
    euler_step,
    posterior_step,
    sample,
    sample_many,
    time_grid,
    translate_volume,
)


class Echo(Denoiser):
    """x̂₀ = x₁ 인 항등 디노이저. 궤적이 x₁ 에 머뭅니다."""

    def predict(self, t, xt, x1):
        return np.array(x1, dtype=np.float64)


def test_time_grid():
    np.testing.assert_array_equal(time_grid(SamplerConfig(steps=1)), [1.0, 0.0])
    grid = SamplerConfig(steps=40).grid
    assert grid.shape == (41,)
    assert (grid[0], grid[-1]) == (1.0, 0.0)
    assert np.all(np.diff(grid) < 0)


@pytest.mark.parametrize(
    "kwargs",
    [dict(steps=0), dict(eta=1.5), dict(eta=-0.1), dict(t_start=0.5, t_end=0.5), dict(t_start=1.2)],
)
def test_sampler_config_validation(kwargs):
    with pytest.raises(DomainError):
        SamplerConfig(**kwargs)


def test_euler_step_needs_positive_gamma(sched):
    x = np.zeros(3)
    with pytest.raises(SingularityError):
        euler_step(x, x, x, 1.0, 0.025, sched, 0.0)


def test_euler_step_requires_rng_for_noise(sched):
    x = np.ones(3)
    with pytest.raises(DomainError):
        euler_step(x, 0.9 * x, x, 0.5, 0.025, sched, 1.0)


def test_posterior_step_rejects_oversized_step(sched):
    x = np.zeros(2)
    with pytest.raises(DomainError):
        posterior_step(x, x, x, 0.01, 0.5, sched, 1.0, np.random.default_rng(0))


def test_posterior_step_without_noise_is_kernel_mean(sched):
    x0_hat, x1, z = np.array([0.2]), np.array([1.0]), np.array([0.5])
    out = posterior_step(x0_hat, x1, z, 0.25, 0.25, sched, 0.0)
    alpha, beta, _ = sched.coefficients(0.25)
    expected = alpha * 0.2 + beta * 1.0 + sched.gamma(0.25) * 0.5
    assert out[0] == pytest.approx(expected, rel=1e-12)


def test_ode_is_bit_identical(sched, params):
    model = AnalyticPosterior(params, sched)
    x1 = np.linspace(-2.0, 2.0, 21)
    config = SamplerConfig(steps=40, eta=0.0)
    first = sample(model, x1, config, sched)
    second = sample(model, x1, config, sched, np.random.default_rng(99))
    np.testing.assert_array_equal(first, second)


def test_sde_uses_config_seed_by_default(sched, params):
    model = AnalyticPosterior(params, sched)
    x1 = np.zeros(50)
    config = SamplerConfig(steps=10, eta=1.0, seed=3)
    np.testing.assert_array_equal(
        sample(model, x1, config, sched),
        sample(model, x1, config, sched, np.random.default_rng(3)),
    )


def test_echo_denoiser_keeps_condition(sched):
    x1 = np.random.default_rng(0).normal(size=(6, 8))
    out = sample(Echo(), x1, SamplerConfig(steps=20), sched)
    np.testing.assert_allclose(out, x1, atol=1e-12)


def test_single_step_sampling(sched, params):
    model = AnalyticPosterior(params, sched)
    x1 = np.array([0.7, -0.4])
    out = sample(model, x1, SamplerConfig(steps=1), sched)
    np.testing.assert_allclose(out, params.conditional(x1)[0], rtol=1e-12)


def test_non_finite_condition(sched, params):
    with pytest.raises(NumericalError):
        sample(AnalyticPosterior(params, sched), np.array([np.nan]), SamplerConfig(), sched)


def test_sample_many_seeds_per_item(sched, params):
    model = AnalyticPosterior(params, sched)
    conditions = [np.zeros(5), np.ones(5), np.full(5, -1.0)]
    config = SamplerConfig(steps=8, eta=1.0, seed=10)
    outputs = sample_many(model, conditions, config, sched)
    for k, (x1, out) in enumerate(zip(conditions, outputs)):
        expected = sample(model, x1, config, sched, np.random.default_rng(10 + k))
        np.testing.assert_array_equal(out, expected)


@pytest.mark.slow
def test_sde_moments_match_conditional(sched, params):
    model = AnalyticPosterior(params, sched)
    x1 = np.full(50_000, 1.0)
    mean, var = (float(v[0]) for v in params.conditional(x1[:1]))
    errors = []
    for steps in (40, 160):
        out = sample(model, x1, SamplerConfig(steps=steps, eta=1.0), sched, np.random.default_rng(1))
        assert abs(out.mean() - mean) < 0.03
        errors.append(abs(out.var() / var - 1.0))
    assert errors[0] < 0.2
    assert errors[1] < 0.06
    assert errors[1] < errors[0]


def _volume(rng, shape=(4, 4, 4)):
    return Volume(rng.uniform(size=shape).astype(np.float32), subject_id="s01", modality="t1-like")


def test_translate_volume_identity(sched):
    condition = _volume(np.random.default_rng(1))
    out = translate_volume(Echo(), condition, SamplerConfig(steps=5), sched, patch=2, target=Modality.FA_LIKE)
    assert out.shape == condition.shape
    assert out.subject_id == "s01"
    assert out.modality is Modality.FA_LIKE
    assert out.norm is None
    np.testing.assert_allclose(out.voxels, condition.voxels, atol=1e-6)


def test_translate_volume_resampling(sched):
    condition = _volume(np.random.default_rng(2))
    resampling = Resampling(downsample=2, pad_shape=(8, 8, 8))
    out = translate_volume(Echo(), condition, SamplerConfig(steps=5), sched, patch=2, resampling=resampling)
    expected = upsample(downsample(condition, 2), 2).voxels
    assert out.shape == (4, 4, 4)
    np.testing.assert_allclose(out.voxels, expected, atol=1e-6)


def test_translate_volume_clips_to_unit_range(sched):
    voxels = np.linspace(-1.0, 2.0, 64).reshape(4, 4, 4).astype(np.float32)
    out = translate_volume(Echo(), Volume(voxels), SamplerConfig(steps=3), sched, patch=2)
    assert out.voxels.min() == 0.0
    assert out.voxels.max() == 1.0
