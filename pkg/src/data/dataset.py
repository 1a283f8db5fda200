from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence, TypeVar
import logging
import numpy as np
import pandas as pd
from src.data.volume import Modality, Resampling, Volume, patchify, read_volume
from src.errors import DataError, DegenerateInputError, DomainError, ShapeMismatchError

logger = logging.getLogger(__name__)

T = TypeVar("T")

DEFAULT_RATIOS = (7.0, 1.5, 1.5)
MANIFEST_COLUMNS = ["subject_id", "t1_path", "fa_path", "split"]


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class Direction(str, Enum):
    """변환 방향. 조건 x₁ 이 되는 쪽이 앞에 옵니다."""

    T1_TO_FA = "t1-to-fa"
    FA_TO_T1 = "fa-to-t1"

    @property
    def source(self) -> Modality:
        return Modality.T1_LIKE if self is Direction.T1_TO_FA else Modality.FA_LIKE

    @property
    def target(self) -> Modality:
        return Modality.FA_LIKE if self is Direction.T1_TO_FA else Modality.T1_LIKE


@dataclass
class PairedDataset:
    """(x0, x1) 쌍의 목록. x0 은 목표 모달리티, x1 은 조건입니다."""

    items: list[tuple[Volume, Volume]] = field(default_factory=list)
    split: Split | None = None

    def __post_init__(self):
        seen: set[str] = set()
        for x0, x1 in self.items:
            if x0.shape != x1.shape:
                raise ShapeMismatchError(
                    f"subject {x0.subject_id!r}: paired shapes differ {x0.shape} vs {x1.shape}"
                )
            if x0.subject_id != x1.subject_id:
                raise DataError(f"pair mixes subjects {x0.subject_id!r} and {x1.subject_id!r}")
            if x0.subject_id in seen:
                raise DataError(f"subject {x0.subject_id!r} appears twice in one split")
            seen.add(x0.subject_id)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def subject_ids(self) -> list[str]:
        return [x0.subject_id for x0, _ in self.items]

    def arrays(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(x0.voxels, x1.voxels) for x0, x1 in self.items]


def split_sizes(n: int, ratios: Sequence[float] = DEFAULT_RATIOS) -> tuple[int, ...]:
    """최대 잔여 배분. 잔여가 같으면 앞쪽(train, val, test 순) 분할이 먼저 받습니다."""
    ratios = tuple(float(r) for r in ratios)
    if not ratios or any(r <= 0 for r in ratios):
        raise DomainError(f"split ratios must be positive, got {ratios}")
    if n < len(ratios):
        raise DegenerateInputError(f"cannot split {n} items into {len(ratios)} parts")

    total = sum(ratios)
    quotas = [n * r / total for r in ratios]
    sizes = [int(np.floor(q)) for q in quotas]
    remainders = [q - s for q, s in zip(quotas, sizes)]
    order = sorted(range(len(ratios)), key=lambda k: (-round(remainders[k], 12), k))
    for k in order[: n - sum(sizes)]:
        sizes[k] += 1
    return tuple(sizes)


def split(
    items: Sequence[T], ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 0
) -> tuple[list[T], ...]:
    sizes = split_sizes(len(items), ratios)
    order = np.random.default_rng(seed).permutation(len(items))
    parts, start = [], 0
    for size in sizes:
        parts.append([items[k] for k in order[start : start + size]])
        start += size
    return tuple(parts)


def split_dataset(
    ds: PairedDataset, ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 0
) -> tuple[PairedDataset, PairedDataset, PairedDataset]:
    train, val, test = split(ds.items, ratios, seed)
    return (
        PairedDataset(train, Split.TRAIN),
        PairedDataset(val, Split.VAL),
        PairedDataset(test, Split.TEST),
    )


# =====[매니페스트]=====


def write_manifest(rows: pd.DataFrame | list[dict], path: str | Path) -> Path:
    path = Path(path)
    df = pd.DataFrame(rows)
    missing = set(MANIFEST_COLUMNS) - set(df.columns)
    if missing:
        raise DataError(f"manifest rows lack columns {sorted(missing)}")
    path.parent.mkdir(parents=True, exist_ok=True)
    df[MANIFEST_COLUMNS].to_csv(path, index=False)
    return path


def read_manifest(path: str | Path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = set(MANIFEST_COLUMNS) - set(df.columns)
    if missing:
        raise DataError(f"{path}: manifest lacks columns {sorted(missing)}")
    bad = set(df["split"]) - {s.value for s in Split}
    if bad:
        raise DataError(f"{path}: unknown split tags {sorted(bad)}")
    dup = df["subject_id"][df["subject_id"].duplicated()]
    if len(dup):
        raise DataError(f"{path}: duplicate subject ids {sorted(set(dup))}")
    return df


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_split(
    manifest_path: str | Path,
    split_tag: Split | str,
    direction: Direction | str = Direction.T1_TO_FA,
) -> PairedDataset:
    """매니페스트에서 한 분할을 읽어 (x0, x1) 쌍으로 만듭니다. 경로는 매니페스트 기준 상대경로입니다."""
    manifest_path = Path(manifest_path)
    split_tag = Split(split_tag)
    direction = Direction(direction)
    df = read_manifest(manifest_path)
    base = manifest_path.parent

    items = []
    for row in df[df["split"] == split_tag.value].itertuples(index=False):
        t1 = read_volume(_resolve(base, row.t1_path), row.subject_id, Modality.T1_LIKE)
        fa = read_volume(_resolve(base, row.fa_path), row.subject_id, Modality.FA_LIKE)
        x0, x1 = (fa, t1) if direction is Direction.T1_TO_FA else (t1, fa)
        items.append((x0, x1))
    logger.info("loaded %d %s pairs from %s", len(items), split_tag.value, manifest_path)
    return PairedDataset(items, split_tag)


def patch_pairs(
    ds: PairedDataset, patch: int, resampling: Resampling | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """모든 쌍을 변환 해상도로 옮긴 뒤 p³ 패치 벡터로 잘라 (n, p³) 배열 두 개로 쌓습니다."""
    resampling = resampling or Resampling()
    if len(ds) == 0:
        raise DegenerateInputError(f"{ds.split} split holds no pairs")
    x0_rows, x1_rows = [], []
    for x0, x1 in ds:
        x0_rows.append(patchify(resampling.forward(x0).voxels, patch))
        x1_rows.append(patchify(resampling.forward(x1).voxels, patch))
    return np.concatenate(x0_rows), np.concatenate(x1_rows)
