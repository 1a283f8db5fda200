from __future__ import annotations
from dataclasses import dataclass
from pathlib import Path
import logging
import numpy as np
from numpy.typing import NDArray
from tqdm import tqdm
from src.data.dataset import DEFAULT_RATIOS, Split, split, write_manifest
from src.data.volume import Modality, Shape3, Volume, minmax_normalize, write_volume
from src.errors import DegenerateInputError, DomainError
from src.metrics import fractional_anisotropy

logger = logging.getLogger(__name__)

MIN_EXTENT = 32
DEFAULT_SHAPE: Shape3 = (32, 32, 32)


@dataclass(frozen=True)
class Ellipsoid:
    center: NDArray[np.float64]
    radii: NDArray[np.float64]
    intensity: float
    eigenvalues: tuple[float, float, float]

    @property
    def anisotropy(self) -> float:
        return float(fractional_anisotropy(*self.eigenvalues))

    def radius_sq(self, grid: tuple[NDArray[np.float64], ...]) -> NDArray[np.float64]:
        return sum(((g - c) / r) ** 2 for g, c, r in zip(grid, self.center, self.radii))


def random_ellipsoids(rng: np.random.Generator, shape: Shape3) -> list[Ellipsoid]:
    extents = np.asarray(shape, dtype=np.float64)
    count = int(rng.integers(3, 9))
    ellipsoids = []
    for _ in range(count):
        center = rng.uniform(0.3, 0.7, 3) * extents
        radii = rng.uniform(0.08, 0.25, 3) * extents
        intensity = float(rng.uniform(0.3, 1.0))
        # 주 고유값이 나머지보다 커서 FA > 0
        major = float(rng.uniform(1.2, 2.0))
        minor = np.sort(rng.uniform(0.1, 1.0, 2))[::-1]
        ellipsoids.append(
            Ellipsoid(center, radii, intensity, (major, float(minor[0]), float(minor[1])))
        )
    return ellipsoids


def phantom_pair(
    seed: int, shape: Shape3 = DEFAULT_SHAPE, subject_id: str | None = None
) -> tuple[Volume, Volume]:
    """같은 타원체 배치를 공유하는 (T1 유사, FA 유사) 팬텀 한 쌍.

    T1 채널은 타원체 안쪽이 밝고 가장자리로 갈수록 어두워지는 I_k (1 - r²/2),
    FA 채널은 고유값 세 개의 FA 에 껍질 가중치 (0.2 + 0.8 r²) 를 곱한 값입니다.
    뒤에 그린 타원체가 앞의 것을 덮고, 배경은 두 채널 모두 정확히 0 입니다.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3 or any(s < MIN_EXTENT for s in shape):
        raise DomainError(f"phantom extents must be at least {MIN_EXTENT}, got {shape}")

    rng = np.random.default_rng(seed)
    grid = np.ogrid[tuple(slice(0, s) for s in shape)]
    grid = tuple(g.astype(np.float64) + 0.5 for g in grid)

    t1 = np.zeros(shape, dtype=np.float64)
    fa = np.zeros(shape, dtype=np.float64)
    for ellipsoid in random_ellipsoids(rng, shape):
        r_sq = ellipsoid.radius_sq(grid)
        inside = r_sq <= 1.0
        t1[inside] = ellipsoid.intensity * (1.0 - 0.5 * r_sq[inside])
        fa[inside] = ellipsoid.anisotropy * (0.2 + 0.8 * r_sq[inside])

    subject_id = subject_id or f"phantom-{seed:04d}"
    return (
        minmax_normalize(Volume(t1, subject_id, Modality.T1_LIKE)),
        minmax_normalize(Volume(fa, subject_id, Modality.FA_LIKE)),
    )


def write_corpus(
    out_dir: str | Path, count: int, shape: Shape3 = DEFAULT_SHAPE, seed: int = 0
) -> Path:
    """팬텀 count 쌍과 7:1.5:1.5 분할 매니페스트를 out_dir 아래에 씁니다.

    k 번째 피험자의 시드는 seed * 1000 + k 이며 결과 디렉터리는 입력만의 함수입니다.
    """
    if count < 1:
        raise DegenerateInputError(f"phantom count must be positive, got {count}")
    out_dir = Path(out_dir)
    subject_ids = [f"phantom-{k:04d}" for k in range(count)]
    parts = split(subject_ids, DEFAULT_RATIOS, seed)
    tags = {sid: tag for tag, part in zip(Split, parts) for sid in part}

    rows = []
    progress = tqdm(subject_ids, desc="phantom", disable=not logger.isEnabledFor(logging.INFO))
    for k, sid in enumerate(progress):
        t1, fa = phantom_pair(seed * 1000 + k, shape, subject_id=sid)
        t1_path = write_volume(t1, out_dir / "volumes" / f"{sid}_t1.bvol")
        fa_path = write_volume(fa, out_dir / "volumes" / f"{sid}_fa.bvol")
        rows.append(
            {
                "subject_id": sid,
                "t1_path": t1_path.relative_to(out_dir).as_posix(),
                "fa_path": fa_path.relative_to(out_dir).as_posix(),
                "split": tags[sid].value,
            }
        )
    manifest = write_manifest(rows, out_dir / "manifest.csv")
    logger.info("wrote %d phantom pairs to %s", count, out_dir)
    return manifest
