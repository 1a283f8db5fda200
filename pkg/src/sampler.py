from __future__ import annotations
from dataclasses import dataclass
import logging
import numpy as np
from numpy.typing import NDArray, ArrayLike
from tqdm import tqdm
from src.bridge import zhat
from src.data.volume import Modality, Resampling, Volume, patchify, unpatchify
from src.denoiser import Denoiser
from src.errors import DomainError, NumericalError, SingularityError
from src.schedule import BridgeSchedule

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 40
    eta: float = 0.0  # 0 = ODE, 1 = SDE
    t_start: float = 1.0
    t_end: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise DomainError(f"steps must be at least 1, got {self.steps}")
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError(f"eta must lie in [0, 1], got {self.eta}")
        if not 0.0 <= self.t_end < self.t_start <= 1.0:
            raise DomainError(
                f"need 0 <= t_end < t_start <= 1, got {self.t_end}, {self.t_start}"
            )

    @property
    def grid(self) -> NDArray[np.float64]:
        return time_grid(self)


def time_grid(config: SamplerConfig) -> NDArray[np.float64]:
    """t_start 에서 t_end 까지 균등 간격으로 내려가는 N + 1 개의 시각."""
    if config.steps < 1:
        raise DomainError(f"steps must be at least 1, got {config.steps}")
    grid = np.linspace(config.t_start, config.t_end, config.steps + 1)
    # linspace 는 끝점을 정확히 맞추지만 명시적으로 고정해 둡니다.
    grid[0], grid[-1] = config.t_start, config.t_end
    return grid


def drift(
    xt: NDArray[np.float64],
    x0_hat: NDArray[np.float64],
    x1: NDArray[np.float64],
    t: float,
    sched: BridgeSchedule,
    eta: float,
) -> NDArray[np.float64]:
    """b(t, x_t, x₁) = α̇ x̂₀ + β̇ x₁ + (γ̇ + ε_t/γ_t) ẑ_t."""
    z = zhat(xt, x0_hat, x1, t, sched)
    alpha_dot, beta_dot, gamma_dot = sched.derivatives(t)
    eps = sched.epsilon(t, eta)
    gamma = sched.gamma(t)
    return alpha_dot * x0_hat + beta_dot * x1 + (gamma_dot + eps / gamma) * z


def _fresh_noise(
    shape: tuple[int, ...], scale: float, rng: np.random.Generator | None
) -> NDArray[np.float64] | float:
    if scale == 0.0:
        return 0.0
    if rng is None:
        raise DomainError("a random source is required when eta > 0")
    return scale * rng.standard_normal(shape)


def euler_step(
    xt: ArrayLike,
    x0_hat: ArrayLike,
    x1: ArrayLike,
    t: float,
    dt: float,
    sched: BridgeSchedule,
    eta: float,
    rng: np.random.Generator | None = None,
) -> NDArray[np.float64]:
    """오일러 이산화 x_{t-Δt} = x_t - b Δt + √(2ε_t Δt) z̄.

    Δt 는 항상 양의 간격 t_i - t_{i-1} 입니다. t = 1 에서 출발하는 첫 스텝은
    γ_t = 0 이라 여기서 처리하지 않고 sample 의 경계 분기에서 처리합니다.
    """
    xt = np.asarray(xt, dtype=np.float64)
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if dt < 0:
        raise DomainError(f"dt must be nonnegative, got {dt}")
    if sched.gamma(t) == 0.0:
        raise SingularityError(f"euler step needs gamma_t > 0, got t={t}")

    b = drift(xt, x0_hat, x1, t, sched, eta)
    eps = sched.epsilon(t, eta)
    return xt - b * dt + _fresh_noise(xt.shape, np.sqrt(2.0 * eps * dt), rng)


def posterior_step(
    x0_hat: ArrayLike,
    x1: ArrayLike,
    zhat_val: ArrayLike,
    t_next: float,
    dt: float,
    sched: BridgeSchedule,
    eta: float,
    rng: np.random.Generator | None = None,
) -> NDArray[np.float64]:
    """사후 재샘플링 이산화 α_{t'} x̂₀ + β_{t'} x₁ + z̃, t' = t - Δt.

    z̃ = √(γ_{t'}² - 2ε_t Δt) ẑ + √(2ε_t Δt) z̄ 이고, ε_t 는 이동 전 시각 t' + Δt 에서 잽니다.
    """
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    zhat_val = np.asarray(zhat_val, dtype=np.float64)

    alpha, beta, gamma_sq = sched.coefficients(t_next)
    eps = sched.epsilon(min(t_next + dt, 1.0), eta)
    injected = 2.0 * eps * dt
    radicand = gamma_sq - injected
    if radicand < 0:
        if radicand > -1e-15:
            radicand = 0.0
        else:
            raise DomainError(
                f"gamma^2(t')={gamma_sq:.6g} < 2*eps*dt={injected:.6g} at t'={t_next}: "
                "step too large for the noise schedule"
            )

    z_tilde = np.sqrt(radicand) * zhat_val + _fresh_noise(
        x0_hat.shape, np.sqrt(injected), rng
    )
    return alpha * x0_hat + beta * x1 + z_tilde


def _boundary_euler_step(
    x0_hat: NDArray[np.float64],
    x1: NDArray[np.float64],
    t: float,
    dt: float,
    sched: BridgeSchedule,
    eta: float,
    rng: np.random.Generator | None,
) -> NDArray[np.float64]:
    # γ_t = 0 인 t = 1 에서 ẑ 는 극한값 0 이므로 (γ̇ + ε/γ) ẑ 항은 사라지고 x_t = x₁ 입니다.
    alpha_dot, beta_dot = sched.rates(t)
    b = alpha_dot * x0_hat + beta_dot * x1
    eps = sched.epsilon(t, eta)
    return x1 - b * dt + _fresh_noise(x1.shape, np.sqrt(2.0 * eps * dt), rng)


def sample(
    model: Denoiser,
    x1: ArrayLike,
    config: SamplerConfig,
    sched: BridgeSchedule,
    rng: np.random.Generator | None = None,
    *,
    progress: bool = False,
) -> NDArray[np.float64]:
    """x₁ 에서 출발해 t = t_end 까지 역방향으로 적분해 x̂₀ 를 만듭니다.

    i = N…2 에서는 오일러 스텝을, 마지막 i = 1 에서는 새 노이즈 없이
    α_{t₀} x̂₀ + β_{t₀} x₁ + γ_{t₀} ẑ 로 점프합니다. η = 0 이면 rng 가 필요 없고
    결과는 입력만의 함수입니다.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    if not np.all(np.isfinite(x1)):
        raise NumericalError("condition x1 contains non-finite values", step=config.steps)
    if rng is None and config.eta > 0:
        rng = np.random.default_rng(config.seed)

    grid = time_grid(config)
    n = config.steps

    if sched.gamma(grid[0]) != 0.0:
        logger.warning(
            "t_start=%s is interior (gamma > 0); the trajectory still starts from x1", grid[0]
        )
    x = x1.copy()

    for j in tqdm(range(n), disable=not progress, desc="sample", leave=False):
        i = n - j
        t_i, t_prev = grid[j], grid[j + 1]
        dt = t_i - t_prev

        x0_hat = np.asarray(model.predict(t_i, x, x1), dtype=np.float64)
        gamma_i = sched.gamma(t_i)
        if gamma_i == 0.0:
            z = np.zeros_like(x)
        else:
            z = zhat(x, x0_hat, x1, t_i, sched)

        if i >= 2:
            if gamma_i == 0.0:
                x = _boundary_euler_step(x0_hat, x1, t_i, dt, sched, config.eta, rng)
            else:
                x = euler_step(x, x0_hat, x1, t_i, dt, sched, config.eta, rng)
        else:
            x = posterior_step(x0_hat, x1, z, t_prev, dt, sched, 0.0)

        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite state at t={t_prev:.6g}", step=i)

    return x


def sample_many(
    model: Denoiser,
    conditions: list[NDArray[np.float64]],
    config: SamplerConfig,
    sched: BridgeSchedule,
    *,
    progress: bool = False,
) -> list[NDArray[np.float64]]:
    """조건 목록을 차례로 변환합니다. k 번째 항목의 시드는 config.seed + k 입니다."""
    outputs = []
    for index, x1 in enumerate(tqdm(conditions, disable=not progress, desc="translate")):
        rng = np.random.default_rng(config.seed + index)
        outputs.append(sample(model, x1, config, sched, rng))
    return outputs


def translate_volume(
    model: Denoiser,
    condition: Volume,
    config: SamplerConfig,
    sched: BridgeSchedule,
    *,
    patch: int,
    resampling: Resampling | None = None,
    target: Modality | None = None,
    rng: np.random.Generator | None = None,
) -> Volume:
    """조건 볼륨 하나를 변환합니다.

    변환 해상도로 옮겨 p³ 패치 벡터로 자른 뒤 모든 패치를 한 번에 샘플링하고,
    다시 원래 격자로 되돌려 [0, 1] 로 자릅니다.
    """
    resampling = resampling or Resampling()
    moved = resampling.forward(condition)
    x1 = patchify(moved.voxels, patch)
    x0_hat = sample(model, x1, config, sched, rng)
    synthetic = condition.with_voxels(
        unpatchify(x0_hat, moved.shape, patch), modality=target, norm=None
    )
    synthetic = resampling.inverse(synthetic, condition.shape)
    return synthetic.with_voxels(np.clip(synthetic.voxels, 0.0, 1.0))
