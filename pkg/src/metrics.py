from __future__ import annotations
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence
import logging
import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F
from numpy.typing import NDArray, ArrayLike
from scipy.spatial.distance import pdist, squareform
from tqdm import tqdm
from src.errors import (
    BridgeError,
    DegenerateInputError,
    DomainError,
    ShapeMismatchError,
)

logger = logging.getLogger(__name__)

PSNR_CAP_DB = 100.0


@dataclass(frozen=True)
class MsSsimConfig:
    scale_weights: tuple[float, ...] = (0.3, 0.5, 0.2)
    kernel_size: int = 11
    kernel_sigma: float = 1.5
    data_range: float = 1.0
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self):
        weights = tuple(float(w) for w in self.scale_weights)
        object.__setattr__(self, "scale_weights", weights)
        if not weights or any(w <= 0 for w in weights):
            raise DomainError(f"scale weights must be positive, got {weights}")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise DomainError(f"scale weights must sum to 1, got {sum(weights)}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise DomainError(f"kernel_size must be a positive odd integer, got {self.kernel_size}")
        if self.kernel_sigma <= 0 or self.data_range <= 0:
            raise DomainError("kernel_sigma and data_range must be positive")

    @property
    def levels(self) -> int:
        return len(self.scale_weights)

    @property
    def min_extent(self) -> int:
        return self.kernel_size * 2 ** (self.levels - 1)


@dataclass(frozen=True)
class MmdConfig:
    """bandwidth 가 None 이면 풀링된 표본의 양의 쌍거리 중앙값을 씁니다."""

    bandwidth: float | None = None
    patch_size: int = 4
    patch_stride: int = 4
    max_patches: int = 1024
    seed: int = 0

    def __post_init__(self):
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise DomainError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.patch_size < 1 or self.patch_stride < 1 or self.max_patches < 2:
            raise DomainError("patch_size, patch_stride must be positive and max_patches >= 2")


# =====[PSNR]=====


def psnr(a: ArrayLike, b: ArrayLike) -> float:
    """10·log10(1 / MSE). MSE = 0 이면 100 dB 로 고정합니다."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"psnr inputs differ in shape: {a.shape} vs {b.shape}")
    for name, v in (("a", a), ("b", b)):
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise DomainError(f"psnr expects values in [0, 1], {name} spans [{v.min()}, {v.max()}]")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse))


# =====[MS-SSIM]=====


def _gaussian_window(size: int, sigma: float) -> torch.Tensor:
    coords = torch.arange(size, dtype=torch.float64) - (size - 1) / 2
    g = torch.exp(-(coords**2) / (2 * sigma**2))
    return g / g.sum()


def _filter(x: torch.Tensor, win: torch.Tensor) -> torch.Tensor:
    """분리 가능한 가우시안 필터 (valid). x 는 (1, 1, *spatial)."""
    spatial = x.ndim - 2
    conv = F.conv2d if spatial == 2 else F.conv3d
    out = x
    for axis in range(spatial):
        shape = [1, 1] + [1] * spatial
        shape[2 + axis] = win.numel()
        out = conv(out, win.reshape(shape))
    return out


def _ssim_terms(
    x: torch.Tensor, y: torch.Tensor, win: torch.Tensor, cfg: MsSsimConfig
) -> tuple[float, float]:
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2

    mu_x = _filter(x, win)
    mu_y = _filter(y, win)
    sigma_x = _filter(x * x, win) - mu_x**2
    sigma_y = _filter(y * y, win) - mu_y**2
    sigma_xy = _filter(x * y, win) - mu_x * mu_y

    cs_map = (2 * sigma_xy + c2) / (sigma_x + sigma_y + c2)
    luminance = (2 * mu_x * mu_y + c1) / (mu_x**2 + mu_y**2 + c1)
    return float((luminance * cs_map).mean()), float(cs_map.mean())


def ms_ssim(a: ArrayLike, b: ArrayLike, cfg: MsSsimConfig | None = None) -> float:
    """2D 또는 3D 다중 스케일 SSIM.

    각 스케일에서 contrast-structure 항을, 가장 거친 스케일에서 luminance 를 포함한
    SSIM 을 구해 가중 기하곱으로 합칩니다. 음수 항은 0 으로 자릅니다.
    """
    cfg = cfg or MsSsimConfig()
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"ms_ssim inputs differ in shape: {a.shape} vs {b.shape}")
    if a.ndim not in (2, 3):
        raise DomainError(f"ms_ssim supports 2D or 3D inputs, got {a.ndim}D")
    for axis, extent in enumerate(a.shape):
        if extent < cfg.min_extent:
            raise DomainError(
                f"axis {axis} has extent {extent}, needs at least {cfg.min_extent} "
                f"for {cfg.levels} scales with a {cfg.kernel_size}-voxel window"
            )

    win = _gaussian_window(cfg.kernel_size, cfg.kernel_sigma)
    x = torch.from_numpy(a.copy())[None, None]
    y = torch.from_numpy(b.copy())[None, None]
    pool = F.avg_pool2d if a.ndim == 2 else F.avg_pool3d

    score = 1.0
    for level, weight in enumerate(cfg.scale_weights):
        ssim_val, cs_val = _ssim_terms(x, y, win, cfg)
        if level == cfg.levels - 1:
            score *= max(ssim_val, 0.0) ** weight
        else:
            score *= max(cs_val, 0.0) ** weight
            padding = [s % 2 for s in x.shape[2:]]
            x = pool(x, kernel_size=2, padding=tuple(padding))
            y = pool(y, kernel_size=2, padding=tuple(padding))
    return float(score)


# =====[MMD]=====


def _flatten_samples(samples: Sequence[ArrayLike] | NDArray) -> NDArray[np.float64]:
    arr = np.asarray([np.asarray(s, dtype=np.float64).ravel() for s in samples])
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def median_bandwidth(distances: NDArray[np.float64]) -> float:
    positive = distances[distances > 0]
    if positive.size == 0:
        raise DegenerateInputError("all pooled samples are identical; MMD bandwidth is undefined")
    return float(np.median(positive))


def _kernel_matrix(pooled: NDArray[np.float64], bandwidth: float | None) -> NDArray[np.float64]:
    condensed = pdist(pooled, "euclidean")
    sigma = bandwidth if bandwidth is not None else median_bandwidth(condensed)
    return np.exp(-squareform(condensed) ** 2 / (2 * sigma**2))


def _v_statistic(kernel: NDArray[np.float64], index_x, index_y) -> float:
    kxx = kernel[np.ix_(index_x, index_x)].mean()
    kyy = kernel[np.ix_(index_y, index_y)].mean()
    kxy = kernel[np.ix_(index_x, index_y)].mean()
    return max(float(kxx + kyy - 2 * kxy), 0.0)


def mmd(
    X: Sequence[ArrayLike] | NDArray,
    Y: Sequence[ArrayLike] | NDArray,
    cfg: MmdConfig | None = None,
) -> float:
    """가우시안 커널 MMD² 의 V-통계량 (0 에서 자름)."""
    cfg = cfg or MmdConfig()
    x = _flatten_samples(X)
    y = _flatten_samples(Y)
    if len(x) < 2 or len(y) < 2:
        raise DegenerateInputError(f"mmd needs at least 2 samples per side, got {len(x)}, {len(y)}")
    if x.shape[1] != y.shape[1]:
        raise ShapeMismatchError(f"sample dimensions differ: {x.shape[1]} vs {y.shape[1]}")

    kernel = _kernel_matrix(np.concatenate([x, y]), cfg.bandwidth)
    m = len(x)
    return _v_statistic(kernel, np.arange(m), np.arange(m, m + len(y)))


@dataclass
class PermutationResult:
    statistic: float
    null: NDArray[np.float64]

    @property
    def p_value(self) -> float:
        return float((1 + np.sum(self.null >= self.statistic)) / (1 + self.null.size))

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.null, q))


def mmd_permutation_test(
    X: Sequence[ArrayLike] | NDArray,
    Y: Sequence[ArrayLike] | NDArray,
    cfg: MmdConfig | None = None,
    permutations: int = 200,
    rng: np.random.Generator | None = None,
) -> PermutationResult:
    """라벨을 섞어 만든 귀무분포와 함께 MMD 를 돌려줍니다. 커널 폭은 풀링 표본에서 고정합니다."""
    cfg = cfg or MmdConfig()
    rng = rng or np.random.default_rng(cfg.seed)
    x = _flatten_samples(X)
    y = _flatten_samples(Y)
    kernel = _kernel_matrix(np.concatenate([x, y]), cfg.bandwidth)
    m, total = len(x), len(x) + len(y)

    statistic = _v_statistic(kernel, np.arange(m), np.arange(m, total))
    null = np.empty(permutations)
    for k in range(permutations):
        order = rng.permutation(total)
        null[k] = _v_statistic(kernel, order[:m], order[m:])
    return PermutationResult(statistic=statistic, null=null)


def extract_patches(
    volume: ArrayLike, size: int, stride: int
) -> NDArray[np.float64]:
    v = np.asarray(volume, dtype=np.float64)
    if any(extent < size for extent in v.shape):
        raise DomainError(f"volume {v.shape} is smaller than the {size}-voxel patch")
    windows = np.lib.stride_tricks.sliding_window_view(v, (size,) * v.ndim)
    windows = windows[tuple(slice(None, None, stride) for _ in range(v.ndim))]
    return windows.reshape(-1, size**v.ndim)


def patch_mmd(a: ArrayLike, b: ArrayLike, cfg: MmdConfig | None = None) -> float:
    """한 쌍의 볼륨을 패치 집합 두 개로 보고 MMD 를 계산합니다.

    패치가 max_patches 보다 많으면 cfg.seed 로 같은 위치들을 골라 양쪽에서 씁니다.
    """
    cfg = cfg or MmdConfig()
    pa = extract_patches(a, cfg.patch_size, cfg.patch_stride)
    pb = extract_patches(b, cfg.patch_size, cfg.patch_stride)
    if len(pa) > cfg.max_patches:
        keep = np.sort(
            np.random.default_rng(cfg.seed).choice(len(pa), cfg.max_patches, replace=False)
        )
        pa, pb = pa[keep], pb[keep]
    return mmd(pa, pb, cfg)


# =====[FA]=====


def fractional_anisotropy(l1: ArrayLike, l2: ArrayLike, l3: ArrayLike) -> float | NDArray[np.float64]:
    """확산 텐서 고유값으로부터 FA 를 계산합니다. 배열 입력은 원소별로 계산합니다."""
    l1, l2, l3 = (np.asarray(v, dtype=np.float64) for v in (l1, l2, l3))
    if np.any(l1 < 0) or np.any(l2 < 0) or np.any(l3 < 0):
        raise DomainError("eigenvalues must be nonnegative")
    norm = np.sqrt(l1**2 + l2**2 + l3**2)
    if np.any(norm == 0):
        raise DegenerateInputError("FA is undefined when all eigenvalues are zero")
    spread = np.sqrt((l1 - l2) ** 2 + (l2 - l3) ** 2 + (l3 - l1) ** 2)
    fa = np.sqrt(0.5) * spread / norm
    return float(fa) if fa.ndim == 0 else fa


# =====[리포트]=====


class SliceAxis(Enum):
    SAGITTAL = 0
    CORONAL = 1
    AXIAL = 2

    @classmethod
    def parse(cls, name: str | SliceAxis) -> SliceAxis:
        if isinstance(name, SliceAxis):
            return name
        try:
            return cls[name.upper()]
        except KeyError:
            raise DomainError(f"unknown axis {name!r}, expected axial/sagittal/coronal") from None


@dataclass
class SliceReport:
    axis: SliceAxis
    values: list[float | None]
    degenerate: list[bool]

    @property
    def mu(self) -> float | None:
        computed = [v for v in self.values if v is not None]
        return float(np.mean(computed)) if computed else None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "axis": self.axis.name.lower(),
                "slice_index": np.arange(len(self.values)),
                "ms_ssim": [np.nan if v is None else v for v in self.values],
                "degenerate_flag": self.degenerate,
            }
        )


def slice_report(
    a: ArrayLike,
    b: ArrayLike,
    axis: str | SliceAxis,
    cfg: MsSsimConfig | None = None,
) -> SliceReport:
    """축을 따라 슬라이스마다 2D MS-SSIM 을 계산합니다.

    두 슬라이스가 모두 상수이거나 너무 작으면 값 없이 degenerate 로 표시하고 μ 에서 뺍니다.
    """
    cfg = cfg or MsSsimConfig()
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"slice report inputs differ in shape: {a.shape} vs {b.shape}")
    axis = SliceAxis.parse(axis)

    values: list[float | None] = []
    degenerate: list[bool] = []
    for index in range(a.shape[axis.value]):
        sa = np.take(a, index, axis=axis.value)
        sb = np.take(b, index, axis=axis.value)
        flat = np.ptp(sa) == 0 and np.ptp(sb) == 0
        small = min(sa.shape) < cfg.min_extent
        if flat or small:
            values.append(None)
            degenerate.append(True)
        else:
            values.append(ms_ssim(sa, sb, cfg))
            degenerate.append(False)
    return SliceReport(axis=axis, values=values, degenerate=degenerate)


@dataclass
class SubjectRow:
    subject_id: str
    ms_ssim_3d: float | None = None
    psnr_db: float | None = None
    mmd: float | None = None
    notes: list[str] = field(default_factory=list)


def _subject_row(
    args: tuple[str, NDArray, NDArray, MsSsimConfig, MmdConfig],
) -> SubjectRow:
    subject_id, real, synthetic, ssim_cfg, mmd_cfg = args
    row = SubjectRow(subject_id=subject_id)
    metrics = (
        ("ms_ssim_3d", lambda: ms_ssim(real, synthetic, ssim_cfg)),
        ("psnr_db", lambda: psnr(real, synthetic)),
        ("mmd", lambda: patch_mmd(real, synthetic, mmd_cfg)),
    )
    for name, compute in metrics:
        try:
            setattr(row, name, compute())
        except BridgeError as e:
            row.notes.append(f"{name}: {e}")
    return row


def subject_report(
    pairs: Sequence[tuple[ArrayLike, ArrayLike]],
    ssim_cfg: MsSsimConfig | None = None,
    mmd_cfg: MmdConfig | None = None,
    subject_ids: Sequence[str] | None = None,
    *,
    workers: int = 1,
    progress: bool = False,
) -> pd.DataFrame:
    """피험자마다 3D MS-SSIM, PSNR, 패치 MMD 를 한 행으로 정리합니다.

    계산할 수 없는 지표는 빈 칸으로 두고 notes 열에 이유를 남깁니다.
    """
    if not pairs:
        raise DegenerateInputError("subject report needs at least one pair")
    ssim_cfg = ssim_cfg or MsSsimConfig()
    mmd_cfg = mmd_cfg or MmdConfig()
    ids = list(subject_ids) if subject_ids is not None else [str(i) for i in range(len(pairs))]
    if len(ids) != len(pairs):
        raise ShapeMismatchError(f"{len(ids)} subject ids for {len(pairs)} pairs")

    tasks = [
        (sid, np.asarray(real), np.asarray(syn), ssim_cfg, mmd_cfg)
        for sid, (real, syn) in zip(ids, pairs)
    ]
    # 행은 입력 순서로 둡니다. 같은 id 가 두 번 와도 합쳐지지 않습니다.
    rows: list[SubjectRow | None] = [None] * len(tasks)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(_subject_row, task): k for k, task in enumerate(tasks)}
            for future in tqdm(as_completed(futures), total=len(tasks), disable=not progress):
                rows[futures[future]] = future.result()
    else:
        for k, task in enumerate(tqdm(tasks, disable=not progress, desc="evaluate")):
            rows[k] = _subject_row(task)

    for row in rows:
        for note in row.notes:
            logger.warning("subject %s: %s", row.subject_id, note)

    return pd.DataFrame(
        [
            {
                "subject_id": row.subject_id,
                "ms_ssim_3d": row.ms_ssim_3d,
                "psnr_db": row.psnr_db,
                "mmd": row.mmd,
                "notes": "; ".join(row.notes),
            }
            for row in rows
        ],
        columns=["subject_id", "ms_ssim_3d", "psnr_db", "mmd", "notes"],
    )
