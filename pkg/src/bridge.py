from __future__ import annotations
from dataclasses import dataclass, asdict
from typing import Iterable
import numpy as np
from numpy.typing import NDArray, ArrayLike
from src.errors import (
    DegenerateInputError,
    DomainError,
    ShapeMismatchError,
    SingularityError,
)
from src.schedule import BridgeSchedule, Time

# Cauchy-Schwarz 검사에서 허용하는 반올림 오차
_CS_TOLERANCE = 1e-12


@dataclass(frozen=True)
class MomentStats:
    """학습 데이터 전체에서 풀링한 스칼라 모멘트 σ₀², σ₁², σ₀₁."""

    sigma0_sq: float
    sigma1_sq: float
    sigma01: float

    def __post_init__(self):
        if self.sigma0_sq < 0 or self.sigma1_sq < 0:
            raise DomainError(
                f"variances must be nonnegative, got {self.sigma0_sq}, {self.sigma1_sq}"
            )
        bound = np.sqrt(self.sigma0_sq * self.sigma1_sq)
        if abs(self.sigma01) > bound * (1 + _CS_TOLERANCE) + _CS_TOLERANCE:
            raise DomainError(
                f"|sigma01|={abs(self.sigma01)} exceeds sqrt(sigma0_sq*sigma1_sq)={bound}"
            )

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class PrecondCoeffs:
    c_in: Time
    c_skip: Time
    c_out: Time
    loss_weight: Time
    c_noise: Time


def _broadcast_time(t: Time, x: NDArray) -> Time:
    # 배치별 t 는 (B,) 로 들어오므로 나머지 축으로 브로드캐스트되도록 맞춥니다.
    if np.ndim(t) == 0:
        return t
    t = np.asarray(t, dtype=np.float64)
    return t.reshape(t.shape + (1,) * (x.ndim - t.ndim))


def forward_map(
    x0: ArrayLike,
    x1: ArrayLike,
    t: Time,
    sched: BridgeSchedule,
    noise: ArrayLike,
) -> NDArray[np.float64]:
    """α_t x₀ + β_t x₁ + γ_t v. 노이즈 v 가 주어진 결정적 전이 함수입니다."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != x1.shape or x0.shape != noise.shape:
        raise ShapeMismatchError(
            f"x0 {x0.shape}, x1 {x1.shape} and noise {noise.shape} must share a shape"
        )
    alpha, beta, _ = sched.coefficients(t)
    gamma = sched.gamma(t)
    alpha, beta, gamma = (_broadcast_time(c, x0) for c in (alpha, beta, gamma))
    return alpha * x0 + beta * x1 + gamma * noise


def sample_xt(
    x0: ArrayLike,
    x1: ArrayLike,
    t: Time,
    sched: BridgeSchedule,
    rng: np.random.Generator,
) -> NDArray[np.float64]:
    """전이 커널 N(α_t x₀ + β_t x₁, γ_t² I) 에서 x_t 를 샘플링합니다."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ShapeMismatchError(f"x0 {x0.shape} and x1 {x1.shape} must share a shape")
    noise = rng.standard_normal(x0.shape)
    return forward_map(x0, x1, t, sched, noise)


def zhat(
    xt: ArrayLike,
    x0_hat: ArrayLike,
    x1: ArrayLike,
    t: Time,
    sched: BridgeSchedule,
) -> NDArray[np.float64]:
    """현재 상태에서 정규화된 잔여 노이즈 ẑ_t = (x_t - α_t x̂₀ - β_t x₁) / γ_t 를 복원합니다."""
    xt = np.asarray(xt, dtype=np.float64)
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if not (xt.shape == x0_hat.shape == x1.shape):
        raise ShapeMismatchError(
            f"xt {xt.shape}, x0_hat {x0_hat.shape}, x1 {x1.shape} must share a shape"
        )
    alpha, beta, _ = sched.coefficients(t)
    gamma = sched.gamma(t)
    if np.any(np.asarray(gamma) == 0.0):
        raise SingularityError(f"gamma_t vanishes at t={t!r}; use the boundary step")
    alpha, beta, gamma = (_broadcast_time(c, xt) for c in (alpha, beta, gamma))
    return (xt - alpha * x0_hat - beta * x1) / gamma


def estimate_moments(pairs: Iterable[tuple[ArrayLike, ArrayLike]]) -> MomentStats:
    """모든 쌍과 모든 좌표를 하나로 풀링해 (n - 1) 정규화 분산/공분산을 구합니다."""
    x0_values: list[NDArray[np.float64]] = []
    x1_values: list[NDArray[np.float64]] = []
    for x0, x1 in pairs:
        x0 = np.asarray(x0, dtype=np.float64)
        x1 = np.asarray(x1, dtype=np.float64)
        if x0.shape != x1.shape:
            raise ShapeMismatchError(f"paired shapes differ: {x0.shape} vs {x1.shape}")
        x0_values.append(x0.ravel())
        x1_values.append(x1.ravel())

    if len(x0_values) < 2:
        raise DegenerateInputError(
            f"moment estimation needs at least 2 pairs, got {len(x0_values)}"
        )

    a = np.concatenate(x0_values)
    b = np.concatenate(x1_values)
    n = a.size
    da = a - a.mean()
    db = b - b.mean()
    sigma0_sq = float(da @ da / (n - 1))
    sigma1_sq = float(db @ db / (n - 1))
    sigma01 = float(da @ db / (n - 1))

    # 반올림 때문에 Cauchy-Schwarz 경계를 아주 조금 넘는 경우를 잘라냅니다.
    bound = np.sqrt(sigma0_sq * sigma1_sq)
    sigma01 = float(np.clip(sigma01, -bound, bound))

    return MomentStats(sigma0_sq=sigma0_sq, sigma1_sq=sigma1_sq, sigma01=sigma01)


def precond(t: Time, sched: BridgeSchedule, moments: MomentStats) -> PrecondCoeffs:
    """c_in, c_skip, c_out, λ, c_noise 를 계산합니다.

    c_in⁻² 은 x_t 의 분산 α²σ₀² + β²σ₁² + 2αβσ₀₁ + γ² 이고, c_out 은 x_t 만 주어졌을 때
    x₀ 의 조건부 표준편차입니다. 끝점(특히 t = 0)은 정의역에서 제외됩니다.
    """
    arr = np.asarray(t, dtype=np.float64)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DomainError(f"preconditioning is defined on (0, 1), got t={t!r}")

    alpha, beta, gamma_sq = (np.asarray(c) for c in sched.coefficients(arr))
    s0, s1, s01 = moments.sigma0_sq, moments.sigma1_sq, moments.sigma01

    var_xt = alpha**2 * s0 + beta**2 * s1 + 2 * alpha * beta * s01 + gamma_sq
    if np.any(var_xt <= 0.0):
        raise DegenerateInputError(f"Var(x_t) vanishes at t={t!r}")
    c_in = 1.0 / np.sqrt(var_xt)
    c_skip = (alpha * s0 + beta * s01) * c_in**2

    radicand = beta**2 * s0 * s1 - beta**2 * s01**2 + gamma_sq * s0
    c_out = np.sqrt(np.maximum(radicand, 0.0)) * c_in
    if np.any(c_out == 0.0):
        raise SingularityError(f"c_out vanishes at t={t!r}; loss weight is undefined")

    loss_weight = 1.0 / c_out**2
    c_noise = 0.25 * np.log(arr)

    def out(value):
        return float(value) if np.ndim(t) == 0 else value

    return PrecondCoeffs(
        c_in=out(c_in),
        c_skip=out(c_skip),
        c_out=out(c_out),
        loss_weight=out(loss_weight),
        c_noise=out(c_noise),
    )
