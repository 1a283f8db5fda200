"""
`verify` 명령이 실행하는 교차 모듈 성질 검사 모음.

각 검사는 스케줄을 받아 (통과 여부, 요약 문자열) 을 돌려줍니다. 검사 도중의 예외는
실패로 기록되고 나머지 검사는 계속 진행됩니다.
"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Callable
import logging
import time
import numpy as np
import pandas as pd
from src.bridge import estimate_moments, precond, sample_xt
from src.data.dataset import split
from src.data.volume import Volume, decode_volume, encode_volume
from src.denoiser import (
    AnalyticPosterior,
    GaussianTaskParams,
    TinyNet,
    TrainConfig,
    draw_batch,
    gradient_check,
)
from src.errors import BridgeError
from src.metrics import fractional_anisotropy, mmd, ms_ssim, psnr
from src.sampler import SamplerConfig, euler_step, posterior_step, sample
from src.schedule import BridgeSchedule, validate_boundaries

logger = logging.getLogger(__name__)

CheckFn = Callable[[BridgeSchedule], tuple[bool, str]]
CHECKS: dict[str, CheckFn] = {}


def check(name: str):
    def register(fn: CheckFn) -> CheckFn:
        CHECKS[name] = fn
        return fn

    return register


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


# =====[스케줄]=====


@check("schedule_boundaries")
def _boundaries(sched):
    report = validate_boundaries(sched, 1001)
    return report.passed, f"max violation {report.max_violation:.2e}"


@check("schedule_gamma_peak")
def _gamma_peak(sched):
    t = np.linspace(0.0, 1.0, 1001)
    gamma_sq = np.asarray(sched.coefficients(t)[2])
    peak = float(t[np.argmax(gamma_sq)])
    ok = abs(peak - 0.5) < 1e-12 and abs(gamma_sq.max() - sched.gamma_max**2) < 1e-12
    return ok, f"peak at t={peak}, value {gamma_sq.max():.6g}"


@check("epsilon_constant")
def _epsilon_constant(sched):
    eps = np.asarray(sched.epsilon(np.linspace(0.0, 1.0, 1001), 1.0))
    expected = 2 * sched.gamma_max**2
    err = float(np.max(np.abs(eps - expected)))
    return err < 1e-12, f"max |eps - {expected:.6g}| = {err:.2e}"


@check("gamma_sq_finite_difference")
def _gamma_sq_slope(sched):
    # d/dt γ² = 2γγ̇. t = 0.5 에서 기울기가 0 이므로 γ_max² 를 하한 척도로 씁니다.
    t = np.linspace(0.01, 0.99, 99)
    h = 1e-5
    numeric = (
        np.asarray(sched.coefficients(t + h)[2]) - np.asarray(sched.coefficients(t - h)[2])
    ) / (2 * h)
    analytic = 2 * np.asarray(sched.gamma(t)) * np.asarray(sched.derivatives(t)[2])
    scale = np.maximum(np.abs(analytic), sched.gamma_max**2)
    err = float(np.max(np.abs(numeric - analytic) / scale))
    mirrored = np.asarray(sched.derivatives(1.0 - t)[2])
    skew = float(np.max(np.abs(np.asarray(sched.derivatives(t)[2]) + mirrored)))
    return err < 1e-6 and skew < 1e-9, f"max rel error {err:.2e}, antisymmetry {skew:.2e}"


# =====[커널 / 전처리]=====


@check("kernel_moments")
def _kernel_moments(sched):
    rng = np.random.default_rng(0)
    n = 20_000
    worst = 0.0
    for _ in range(5):
        x0, x1, t = rng.normal(), rng.normal(), rng.uniform(0.05, 0.95)
        draws = sample_xt(np.full(n, x0), np.full(n, x1), t, sched, rng)
        alpha, beta, gamma_sq = sched.coefficients(t)
        se = np.sqrt(gamma_sq / n)
        worst = max(worst, abs(draws.mean() - (alpha * x0 + beta * x1)) / se)
        var_se = gamma_sq * np.sqrt(2.0 / (n - 1))
        worst = max(worst, abs(draws.var(ddof=1) - gamma_sq) / var_se)
    return worst < 4.0, f"worst deviation {worst:.2f} standard errors"


@check("precond_unit_variance")
def _unit_variance(sched):
    params = GaussianTaskParams()
    rng = np.random.default_rng(1)
    x0, x1 = params.sample(50_000, rng)
    moments = params.moments()
    worst = 0.0
    for t in np.linspace(0.05, 0.95, 10):
        xt = sample_xt(x0, x1, t, sched, rng)
        scaled = precond(t, sched, moments).c_in * xt
        worst = max(worst, abs(float(scaled.var()) - 1.0))
    return worst < 0.03, f"max |Var(c_in x_t) - 1| = {worst:.4f}"


@check("precond_loss_weight")
def _loss_weight(sched):
    t = np.linspace(0.01, 0.99, 99)
    coeffs = precond(t, sched, GaussianTaskParams().moments())
    err = float(np.max(np.abs(coeffs.loss_weight * coeffs.c_out**2 - 1.0)))
    return err < 1e-12, f"max |lambda c_out^2 - 1| = {err:.2e}"


@check("moment_estimate")
def _moment_estimate(sched):
    params = GaussianTaskParams()
    x0, x1 = params.sample(100_000, np.random.default_rng(2))
    est = estimate_moments(zip(x0, x1))
    err = max(abs(est.sigma0_sq - 1.0), abs(est.sigma1_sq - 1.0), abs(est.sigma01 - 0.5))
    return err < 0.02, f"max moment error {err:.4f}"


# =====[디노이저 / 샘플러]=====


@check("analytic_posterior_endpoints")
def _posterior_endpoints(sched):
    params = GaussianTaskParams()
    model = AnalyticPosterior(params, sched)
    x = np.linspace(-2.0, 2.0, 9)
    at_zero = np.max(np.abs(model.predict(0.0, x, -x) - x))
    at_one = np.max(np.abs(model.predict(1.0, -x, x) - params.conditional(x)[0]))
    err = float(max(at_zero, at_one))
    return err < 1e-12, f"endpoint error {err:.2e}"


@check("tinynet_gradient")
def _tinynet_gradient(sched):
    params = GaussianTaskParams()
    rng = np.random.default_rng(3)
    x0, x1 = params.sample(64, rng)
    net = TinyNet(1, hidden=8, seed=3)
    batch = draw_batch(x0, x1, TrainConfig(batch_size=16), sched, rng)
    err = gradient_check(net, batch, sched, params.moments(), probes=20)
    return err < 1e-4, f"max relative error {err:.2e}"


@check("step_consistency")
def _step_consistency(sched):
    params = GaussianTaskParams()
    model = AnalyticPosterior(params, sched)
    rng = np.random.default_rng(4)
    x0, x1 = params.sample(2_000, rng)
    x0, x1 = x0[:, 0], x1[:, 0]
    t = 0.5
    xt = sample_xt(x0, x1, t, sched, rng)
    x0_hat = model.predict(t, xt, x1)
    alpha, beta, _ = sched.coefficients(t)
    z = (xt - alpha * x0_hat - beta * x1) / sched.gamma(t)

    gaps = []
    for dt in (0.025, 0.0125, 0.00625):
        euler = euler_step(xt, x0_hat, x1, t, dt, sched, 1.0, np.random.default_rng(5))
        post = posterior_step(x0_hat, x1, z, t - dt, dt, sched, 1.0, np.random.default_rng(5))
        gaps.append(float(np.mean(np.abs(euler - post))))
    ok = gaps[0] < 0.05 and gaps[0] > gaps[1] > gaps[2]
    return ok, "mean |euler - posterior| " + ", ".join(f"{g:.2e}" for g in gaps)


@check("oracle_ode_deterministic")
def _ode_deterministic(sched):
    params = GaussianTaskParams()
    model = AnalyticPosterior(params, sched)
    x1 = np.linspace(-2.0, 2.0, 101)
    config = SamplerConfig(steps=40, eta=0.0)
    first = sample(model, x1, config, sched)
    second = sample(model, x1, config, sched)
    return bool(np.array_equal(first, second)), "two eta=0 runs compared bitwise"


@check("oracle_sde_moments")
def _sde_moments(sched):
    params = GaussianTaskParams()
    model = AnalyticPosterior(params, sched)
    x1 = np.full(50_000, 1.0)
    mean, var = (float(v[0]) for v in params.conditional(x1[:1]))

    errors = {}
    for steps in (40, 160):
        config = SamplerConfig(steps=steps, eta=1.0)
        out = sample(model, x1, config, sched, np.random.default_rng(6))
        errors[steps] = (abs(float(out.mean()) - mean), abs(float(out.var()) / var - 1.0))

    # 분산 오차는 Δt 에 대해 1차로 줄어듭니다.
    ok = (
        max(errors[40][0], errors[160][0]) < 0.03
        and errors[40][1] < 0.2
        and errors[160][1] < 0.06
        and errors[160][1] < errors[40][1]
    )
    return ok, ", ".join(
        f"N={n}: mean error {m:.4f}, relative variance error {v:.4f}" for n, (m, v) in errors.items()
    )


# =====[지표 / 데이터]=====


@check("metric_golden_values")
def _metric_golden(sched):
    fa = [fractional_anisotropy(1, 1, 1), fractional_anisotropy(1, 0, 0), fractional_anisotropy(2, 1, 1)]
    fa_err = max(abs(fa[0]), abs(fa[1] - 1.0), abs(fa[2] - 1.0 / np.sqrt(6.0)))
    a = np.zeros((4, 4))
    psnr_err = abs(psnr(a, a + 0.1) - 20.0)
    ok = fa_err < 1e-9 and psnr_err < 1e-9
    return ok, f"FA error {fa_err:.2e}, PSNR error {psnr_err:.2e}"


@check("metric_identities")
def _metric_identities(sched):
    rng = np.random.default_rng(7)
    image = rng.uniform(size=(48, 48))
    samples = rng.normal(size=(30, 3))
    ssim_err = abs(ms_ssim(image, image) - 1.0)
    mmd_val = mmd(samples, samples)
    return ssim_err < 1e-6 and mmd_val < 1e-12, f"MS-SSIM error {ssim_err:.2e}, MMD {mmd_val:.2e}"


@check("bvol_round_trip")
def _bvol_round_trip(sched):
    rng = np.random.default_rng(8)
    v = Volume(rng.normal(size=(3, 4, 5)).astype(np.float32))
    data = encode_volume(v)
    back = decode_volume(data)
    ok = len(data) == 45 + 4 * 60 and np.array_equal(back.voxels, v.voxels)
    return ok and encode_volume(back) == data, f"{len(data)} bytes"


@check("split_partition")
def _split_partition(sched):
    items = list(range(20))
    for seed in range(20):
        parts = split(items, seed=seed)
        if sorted(x for part in parts for x in part) != items:
            return False, f"seed {seed} lost or duplicated items"
    return [len(p) for p in split(items)] == [14, 3, 3], "20 seeds partition 20 items 14/3/3"


def run_checks(sched: BridgeSchedule, names: list[str] | None = None) -> list[CheckResult]:
    results = []
    for name in names or list(CHECKS):
        start = time.perf_counter()
        try:
            passed, detail = CHECKS[name](sched)
        except (BridgeError, ArithmeticError, ValueError) as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        elapsed = time.perf_counter() - start
        level = logging.INFO if passed else logging.WARNING
        logger.log(level, "%s: %s (%s)", name, "pass" if passed else "FAIL", detail)
        results.append(CheckResult(name, bool(passed), detail, elapsed))
    return results


def report_frame(results: list[CheckResult]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "check": r.name,
                "status": "pass" if r.passed else "FAIL",
                "seconds": round(r.seconds, 3),
                "detail": r.detail,
            }
            for r in results
        ]
    )
