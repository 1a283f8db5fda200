from __future__ import annotations
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
import logging
import numpy as np
import torch
from torch import nn
from numpy.typing import NDArray, ArrayLike
from tqdm import tqdm
from src.bridge import MomentStats, precond, sample_xt
from src.errors import (
    DegenerateInputError,
    DomainError,
    ModelMismatchError,
    NumericalError,
    ShapeMismatchError,
)
from src.schedule import BridgeSchedule, Time, make_schedule

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


class Denoiser(ABC):
    @abstractmethod
    def predict(self, t: Time, xt: ArrayLike, x1: ArrayLike) -> NDArray[np.float64]:
        """x̂₀(t, x_t, x₁) 를 반환합니다. 출력 shape 은 입력과 같습니다."""


# =====[가우시안 오라클]=====


@dataclass(frozen=True)
class GaussianTaskParams:
    """좌표별로 독립인 결합 가우시안 (x₀, x₁) 과제.

    각 필드는 스칼라이거나 데이터 벡터와 브로드캐스트되는 배열입니다.
    """

    mu0: float | NDArray[np.float64] = 0.0
    mu1: float | NDArray[np.float64] = 0.0
    var0: float | NDArray[np.float64] = 1.0
    var1: float | NDArray[np.float64] = 1.0
    cov01: float | NDArray[np.float64] = 0.5

    def __post_init__(self):
        var0 = np.asarray(self.var0)
        var1 = np.asarray(self.var1)
        if np.any(var0 < 0) or np.any(var1 < 0):
            raise DomainError("task variances must be nonnegative")
        if np.any(np.asarray(self.cov01) ** 2 > var0 * var1 * (1 + 1e-12)):
            raise DomainError("cov01^2 must not exceed var0*var1")

    def sample(
        self, n: int, rng: np.random.Generator, dim: int = 1
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """(n, dim) 크기의 쌍 (x₀, x₁) 을 뽑습니다."""
        var0 = np.broadcast_to(np.asarray(self.var0, dtype=np.float64), (dim,))
        var1 = np.broadcast_to(np.asarray(self.var1, dtype=np.float64), (dim,))
        cov = np.broadcast_to(np.asarray(self.cov01, dtype=np.float64), (dim,))

        z0 = rng.standard_normal((n, dim))
        z1 = rng.standard_normal((n, dim))
        x0 = self.mu0 + np.sqrt(var0) * z0
        safe = np.where(var0 > 0, var0, 1.0)
        slope = np.where(var0 > 0, cov / safe, 0.0)
        resid = np.sqrt(np.maximum(var1 - slope * cov, 0.0))
        x1 = self.mu1 + slope * (x0 - self.mu0) + resid * z1
        return x0, x1

    def moments(self) -> MomentStats:
        """모든 좌표가 같은 분포일 때의 정확한 풀링 모멘트."""
        return MomentStats(
            sigma0_sq=float(np.mean(self.var0)),
            sigma1_sq=float(np.mean(self.var1)),
            sigma01=float(np.mean(self.cov01)),
        )

    def conditional(self, x1: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """x₀ | x₁ 의 평균과 분산."""
        x1 = np.asarray(x1, dtype=np.float64)
        var1 = np.asarray(self.var1, dtype=np.float64)
        if np.any(var1 == 0):
            raise DegenerateInputError("conditioning on x1 requires var1 > 0")
        mean = self.mu0 + self.cov01 / var1 * (x1 - self.mu1)
        var = self.var0 - np.asarray(self.cov01) ** 2 / var1
        return mean, np.broadcast_to(var, mean.shape)


def analytic_posterior(
    params: GaussianTaskParams,
    t: Time,
    xt: ArrayLike,
    x1: ArrayLike,
    sched: BridgeSchedule,
) -> NDArray[np.float64]:
    """가우시안 과제에서의 정확한 조건부 평균 E[x₀ | x_t, x₁]."""
    xt = np.asarray(xt, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if xt.shape != x1.shape:
        raise ShapeMismatchError(f"xt {xt.shape} and x1 {x1.shape} must share a shape")

    alpha, beta, gamma_sq = (np.asarray(c) for c in sched.coefficients(t))
    if np.ndim(t):
        # 배치별 t 를 데이터 축으로 브로드캐스트
        shape = alpha.shape + (1,) * (xt.ndim - alpha.ndim)
        alpha, beta, gamma_sq = (c.reshape(shape) for c in (alpha, beta, gamma_sq))

    mu0, mu1 = params.mu0, params.mu1
    v0, v1, c = params.var0, params.var1, params.cov01
    v1 = np.asarray(v1, dtype=np.float64)

    var_t = alpha**2 * v0 + beta**2 * v1 + 2 * alpha * beta * c + gamma_sq
    cov_t1 = alpha * c + beta * v1
    cov_0t = alpha * v0 + beta * c
    det = var_t * v1 - cov_t1**2

    dt = xt - (alpha * mu0 + beta * mu1)
    d1 = x1 - mu1

    at_source = (gamma_sq == 0) & (alpha == 0)
    if np.any(at_source & (v1 == 0)):
        raise DegenerateInputError("var1 = 0 and gamma_t = 0: conditioning covariance is singular")

    with np.errstate(divide="ignore", invalid="ignore"):
        joint = mu0 + (cov_0t * (v1 * dt - cov_t1 * d1) + c * (var_t * d1 - cov_t1 * dt)) / det
        only_xt = mu0 + cov_0t / var_t * dt
        only_x1 = mu0 + c / np.where(v1 > 0, v1, 1.0) * d1

    result = np.where(det > 0, joint, np.where(v1 > 0, only_x1, only_xt))
    result = np.where(at_source, only_x1, result)
    # t = 0 에서는 x_t 가 곧 x₀ 입니다.
    result = np.where((gamma_sq == 0) & (beta == 0), xt, result)
    return np.broadcast_to(result, xt.shape).astype(np.float64, copy=True)


class AnalyticPosterior(Denoiser):
    def __init__(self, params: GaussianTaskParams, sched: BridgeSchedule):
        self.params = params
        self.sched = sched

    def predict(self, t, xt, x1):
        return analytic_posterior(self.params, t, xt, x1, self.sched)

    def __repr__(self):
        return f"AnalyticPosterior({self.params})"


# =====[TinyNet]=====


class TinyNet(nn.Module):
    """F_θ: [c_in·x_t, x₁, c_noise] → d 차원 출력을 내는 2층 은닉 MLP.

    Args:
        dim (int): 데이터 벡터의 차원 d
        hidden (int): 은닉층 폭
        seed (int): 초기화 시드. 전역 torch RNG 를 건드리지 않습니다.
    """

    def __init__(self, dim: int, hidden: int = 64, *, seed: int = 0):
        super().__init__()
        if dim < 1 or hidden < 1:
            raise DomainError(f"dim and hidden must be positive, got {dim}, {hidden}")
        self.dim = dim
        self.hidden = hidden
        self.layers = nn.Sequential(
            nn.Linear(2 * dim + 1, hidden),
            nn.Tanh(),
            nn.Linear(hidden, hidden),
            nn.Tanh(),
            nn.Linear(hidden, dim),
        ).to(torch.float64)

        rng = np.random.default_rng(seed)
        with torch.no_grad():
            for module in self.layers:
                if isinstance(module, nn.Linear):
                    bound = 1.0 / np.sqrt(module.in_features)
                    module.weight.copy_(
                        torch.from_numpy(rng.uniform(-bound, bound, module.weight.shape))
                    )
                    module.bias.copy_(
                        torch.from_numpy(rng.uniform(-bound, bound, module.bias.shape))
                    )

    @property
    def layer_sizes(self) -> list[int]:
        return [2 * self.dim + 1, self.hidden, self.hidden, self.dim]

    def forward(
        self, scaled_xt: torch.Tensor, x1: torch.Tensor, c_noise: torch.Tensor
    ) -> torch.Tensor:
        features = torch.cat([scaled_xt, x1, c_noise.unsqueeze(-1)], dim=-1)
        return self.layers(features)


def _as_batch(
    t: Time, xt: ArrayLike, x1: ArrayLike, dim: int
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], tuple[int, ...]]:
    xt = np.asarray(xt, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if xt.shape != x1.shape:
        raise ShapeMismatchError(f"xt {xt.shape} and x1 {x1.shape} must share a shape")
    if xt.shape[-1] != dim:
        raise ShapeMismatchError(f"data vectors have length {xt.shape[-1]}, network expects {dim}")
    shape = xt.shape
    xt = xt.reshape(-1, dim)
    x1 = x1.reshape(-1, dim)
    t_arr = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (xt.shape[0],))
    return t_arr, xt, x1, shape


def preconditioned_forward(
    net: TinyNet,
    t: NDArray[np.float64],
    xt: torch.Tensor,
    x1: torch.Tensor,
    sched: BridgeSchedule,
    moments: MomentStats,
) -> torch.Tensor:
    """x̂₀ = c_skip x_t + c_out F_θ(c_in x_t, x₁, c_noise). 역전파 가능한 torch 경로입니다."""
    coeffs = precond(t, sched, moments)

    def column(value):
        return torch.from_numpy(np.asarray(value, dtype=np.float64).reshape(-1, 1))

    c_in, c_skip, c_out = column(coeffs.c_in), column(coeffs.c_skip), column(coeffs.c_out)
    c_noise = torch.from_numpy(np.asarray(coeffs.c_noise, dtype=np.float64).reshape(-1))
    return c_skip * xt + c_out * net(c_in * xt, x1, c_noise)


def tinynet_predict(
    net: TinyNet,
    t: Time,
    xt: ArrayLike,
    x1: ArrayLike,
    sched: BridgeSchedule,
    moments: MomentStats,
) -> NDArray[np.float64]:
    t_arr, xt_arr, x1_arr, shape = _as_batch(t, xt, x1, net.dim)
    with torch.no_grad():
        out = preconditioned_forward(
            net,
            t_arr,
            torch.tensor(xt_arr),
            torch.tensor(x1_arr),
            sched,
            moments,
        )
    return out.numpy().reshape(shape)


class PreconditionedDenoiser(Denoiser):
    """학습된 TinyNet 을 전처리 파라미터화로 감싼 Denoiser.

    샘플러는 t = 1 에서 출발하지만 전처리 계수는 열린 구간에서만 정의되므로,
    예측 시각은 학습 때 쓴 범위 t_range 로 잘라서 평가합니다.
    """

    def __init__(
        self,
        net: TinyNet,
        sched: BridgeSchedule,
        moments: MomentStats,
        extra: dict | None = None,
        t_range: tuple[float, float] = (0.001, 0.999),
    ):
        self.net = net
        self.sched = sched
        self.moments = moments
        self.extra = dict(extra or {})
        self.t_range = (float(t_range[0]), float(t_range[1]))

    def predict(self, t, xt, x1):
        t = np.clip(np.asarray(t, dtype=np.float64), *self.t_range)
        return tinynet_predict(self.net, t, xt, x1, self.sched, self.moments)


# =====[학습]=====


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    batch_size: int = 8
    steps: int = 1000
    t_min: float = 0.001
    t_max: float = 0.999
    seed: int = 0
    hidden: int = 64
    log_every: int = 100

    def __post_init__(self):
        if not 0.0 < self.t_min < self.t_max < 1.0:
            raise DomainError(f"need 0 < t_min < t_max < 1, got {self.t_min}, {self.t_max}")
        # learning_rate = 0 은 파라미터 고정 실험을 위해 허용합니다.
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise DomainError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if self.batch_size < 1 or self.steps < 0:
            raise DomainError("batch_size must be positive and steps nonnegative")


@dataclass
class Batch:
    """손실 한 번을 평가하는 데 필요한 고정된 표본들."""

    x0: NDArray[np.float64]
    x1: NDArray[np.float64]
    t: NDArray[np.float64]
    xt: NDArray[np.float64]


def draw_batch(
    x0: NDArray[np.float64],
    x1: NDArray[np.float64],
    config: TrainConfig,
    sched: BridgeSchedule,
    rng: np.random.Generator,
) -> Batch:
    index = rng.integers(0, x0.shape[0], size=config.batch_size)
    t = rng.uniform(config.t_min, config.t_max, size=config.batch_size)
    xt = sample_xt(x0[index], x1[index], t, sched, rng)
    return Batch(x0=x0[index], x1=x1[index], t=t, xt=xt)


def batch_loss(
    net: TinyNet,
    batch: Batch,
    sched: BridgeSchedule,
    moments: MomentStats,
) -> torch.Tensor:
    """배치 평균 λ(t)‖x̂₀ - x₀‖²."""
    x0_hat = preconditioned_forward(
        net,
        batch.t,
        torch.from_numpy(batch.xt),
        torch.from_numpy(batch.x1),
        sched,
        moments,
    )
    weight = torch.from_numpy(
        np.asarray(precond(batch.t, sched, moments).loss_weight, dtype=np.float64)
    )
    residual = ((x0_hat - torch.from_numpy(batch.x0)) ** 2).sum(dim=-1)
    return (weight * residual).mean()


def loss(
    net: TinyNet,
    x0: ArrayLike,
    x1: ArrayLike,
    t_draws: ArrayLike,
    sched: BridgeSchedule,
    moments: MomentStats,
    rng: np.random.Generator,
) -> tuple[float, list[torch.Tensor]]:
    """주어진 쌍과 시간으로 x_t 를 새로 뽑아 손실과 파라미터 기울기를 구합니다."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
    t = np.asarray(t_draws, dtype=np.float64).reshape(-1)
    if t.shape[0] != x0.shape[0]:
        raise ShapeMismatchError(f"{t.shape[0]} times for {x0.shape[0]} pairs")
    batch = Batch(x0=x0, x1=x1, t=t, xt=sample_xt(x0, x1, t, sched, rng))

    net.zero_grad()
    value = batch_loss(net, batch, sched, moments)
    value.backward()
    grads = [p.grad.detach().clone() for p in net.parameters()]
    return float(value.detach()), grads


def gradient_check(
    net: TinyNet,
    batch: Batch,
    sched: BridgeSchedule,
    moments: MomentStats,
    *,
    probes: int = 20,
    h: float = 1e-5,
    seed: int = 0,
) -> float:
    """역전파 기울기와 중앙 차분을 비교해 최대 상대 오차를 반환합니다."""
    params = nn.utils.parameters_to_vector(net.parameters()).detach().clone()

    net.zero_grad()
    batch_loss(net, batch, sched, moments).backward()
    analytic = torch.cat([p.grad.reshape(-1) for p in net.parameters()]).detach().clone()

    rng = np.random.default_rng(seed)
    index = rng.choice(params.numel(), size=min(probes, params.numel()), replace=False)

    worst = 0.0
    with torch.no_grad():
        for i in index:
            shifted = params.clone()
            shifted[i] += h
            nn.utils.vector_to_parameters(shifted, net.parameters())
            plus = float(batch_loss(net, batch, sched, moments))
            shifted[i] -= 2 * h
            nn.utils.vector_to_parameters(shifted, net.parameters())
            minus = float(batch_loss(net, batch, sched, moments))
            numeric = (plus - minus) / (2 * h)
            a = float(analytic[i])
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-6))
        nn.utils.vector_to_parameters(params, net.parameters())
    return worst


@dataclass
class TrainResult:
    model: PreconditionedDenoiser
    losses: list[float] = field(default_factory=list)


def _stack_pairs(
    dataset: Sequence[tuple[ArrayLike, ArrayLike]] | tuple[NDArray, NDArray],
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    if isinstance(dataset, tuple) and len(dataset) == 2 and isinstance(dataset[0], np.ndarray):
        x0, x1 = dataset
    else:
        pairs = list(dataset)
        if not pairs:
            raise DegenerateInputError("training needs a nonempty dataset")
        x0 = np.stack([np.asarray(a, dtype=np.float64) for a, _ in pairs])
        x1 = np.stack([np.asarray(b, dtype=np.float64) for _, b in pairs])
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ShapeMismatchError(f"paired arrays differ: {x0.shape} vs {x1.shape}")
    if x0.shape[0] == 0:
        raise DegenerateInputError("training needs a nonempty dataset")
    return x0.reshape(x0.shape[0], -1), x1.reshape(x1.shape[0], -1)


def train(
    dataset: Sequence[tuple[ArrayLike, ArrayLike]] | tuple[NDArray, NDArray],
    config: TrainConfig,
    sched: BridgeSchedule,
    moments: MomentStats,
    *,
    progress: bool = False,
    extra: dict | None = None,
) -> TrainResult:
    """고정 스텝 크기의 SGD 로 TinyNet 을 학습합니다.

    같은 시드에서는 손실 기록이 비트 단위로 같습니다.

    Args:
        dataset: (x₀, x₁) 데이터 벡터 쌍의 목록, 또는 (n, d) 배열 두 개
        config (TrainConfig): 학습 설정
        sched (BridgeSchedule): 브리지 스케줄
        moments (MomentStats): 전처리 계수에 쓰일 데이터 모멘트
        progress (bool): tqdm 진행 막대 표시 여부
        extra (dict | None): 모델 파일에 함께 저장할 부가 정보 (예: patch 크기)
    """
    x0, x1 = _stack_pairs(dataset)
    dim = x0.shape[1]

    rng = np.random.default_rng(config.seed)
    net = TinyNet(dim, config.hidden, seed=config.seed)
    optimizer = torch.optim.SGD(net.parameters(), lr=config.learning_rate)

    logger.info(
        "training TinyNet(dim=%d, hidden=%d) on %d pairs for %d steps",
        dim,
        config.hidden,
        x0.shape[0],
        config.steps,
    )

    losses: list[float] = []
    for step in tqdm(range(config.steps), disable=not progress, desc="train"):
        batch = draw_batch(x0, x1, config, sched, rng)
        optimizer.zero_grad()
        value = batch_loss(net, batch, sched, moments)
        current = float(value.detach())
        if not np.isfinite(current):
            raise NumericalError(f"training diverged: loss={current}", step=step)
        value.backward()
        optimizer.step()
        losses.append(current)

        if config.log_every and (step + 1) % config.log_every == 0:
            window = losses[-config.log_every :]
            logger.info("step %d: mean loss %.6f", step + 1, float(np.mean(window)))

    net.eval()
    return TrainResult(
        model=PreconditionedDenoiser(
            net, sched, moments, extra=extra, t_range=(config.t_min, config.t_max)
        ),
        losses=losses,
    )


# =====[모델 파일]=====


def save_model(model: PreconditionedDenoiser, path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format_version": MODEL_FORMAT_VERSION,
            "schedule_form": model.sched.form,
            "gamma_max": float(model.sched.gamma_max),
            "moments": model.moments.to_dict(),
            "dim": model.net.dim,
            "hidden": model.net.hidden,
            "layer_sizes": model.net.layer_sizes,
            "extra": model.extra,
            "t_range": list(model.t_range),
            "state_dict": model.net.state_dict(),
        },
        path,
    )


def load_model(path: str | Path) -> PreconditionedDenoiser:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelMismatchError(
            f"{path}: unsupported model format {version}, expected {MODEL_FORMAT_VERSION}"
        )

    sched = make_schedule(payload["schedule_form"], payload["gamma_max"])
    moments = MomentStats(**payload["moments"])
    net = TinyNet(payload["dim"], payload["hidden"])
    net.load_state_dict(payload["state_dict"])
    net.eval()
    return PreconditionedDenoiser(
        net,
        sched,
        moments,
        extra=payload.get("extra", {}),
        t_range=tuple(payload.get("t_range", (0.001, 0.999))),
    )
