from __future__ import annotations
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
import struct
import numpy as np
from numpy.typing import NDArray, ArrayLike
from einops import rearrange, reduce, repeat
from src.errors import (
    BadMagicError,
    DegenerateInputError,
    DomainError,
    PayloadSizeError,
    ShapeMismatchError,
    TruncatedPayloadError,
)

MAGIC = b"BVOL1"
RESERVED_SIZE = 16
HEADER_SIZE = len(MAGIC) + 3 * 8 + RESERVED_SIZE  # 45

Shape3 = tuple[int, int, int]


class Modality(str, Enum):
    T1_LIKE = "t1-like"
    FA_LIKE = "fa-like"


@dataclass(frozen=True)
class NormRecord:
    orig_min: float
    orig_max: float


@dataclass(frozen=True)
class Volume:
    """3차원 스칼라 필드. 생성 후에는 voxels 가 읽기 전용입니다."""

    voxels: NDArray[np.float32]
    subject_id: str = ""
    modality: Modality | None = None
    norm: NormRecord | None = None

    def __post_init__(self):
        voxels = np.array(self.voxels, dtype=np.float32, order="C")
        if voxels.ndim != 3 or any(extent < 1 for extent in voxels.shape):
            raise DomainError(f"volume needs three positive extents, got {voxels.shape}")
        voxels.setflags(write=False)
        object.__setattr__(self, "voxels", voxels)
        if self.modality is not None:
            object.__setattr__(self, "modality", Modality(self.modality))

    @property
    def shape(self) -> Shape3:
        return tuple(int(s) for s in self.voxels.shape)  # type: ignore[return-value]

    def with_voxels(self, voxels: ArrayLike, **changes) -> Volume:
        return replace(self, voxels=voxels, **changes)


# =====[BVOL]=====


def encode_volume(v: Volume) -> bytes:
    reserved = (
        struct.pack("<2d", v.norm.orig_min, v.norm.orig_max)
        if v.norm is not None
        else bytes(RESERVED_SIZE)
    )
    header = MAGIC + struct.pack("<3Q", *v.shape) + reserved
    return header + v.voxels.astype("<f4").tobytes(order="C")


def decode_volume(
    data: bytes, subject_id: str = "", modality: Modality | None = None
) -> Volume:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"expected magic {MAGIC!r}, got {data[: len(MAGIC)]!r}")
    if len(data) < HEADER_SIZE:
        raise TruncatedPayloadError(f"header is {len(data)} bytes, expected {HEADER_SIZE}")

    shape = struct.unpack_from("<3Q", data, len(MAGIC))
    reserved = data[HEADER_SIZE - RESERVED_SIZE : HEADER_SIZE]
    if any(extent == 0 for extent in shape):
        raise PayloadSizeError(f"extents must be positive, got {shape}")

    expected = 4 * int(np.prod(shape, dtype=np.uint64))
    payload = data[HEADER_SIZE:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"payload holds {len(payload)} bytes, shape {shape} needs {expected}"
        )
    if len(payload) > expected:
        raise PayloadSizeError(
            f"payload holds {len(payload)} bytes, shape {shape} needs only {expected}"
        )

    norm = None
    if reserved != bytes(RESERVED_SIZE):
        norm = NormRecord(*struct.unpack("<2d", reserved))
    voxels = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
    return Volume(voxels=voxels, subject_id=subject_id, modality=modality, norm=norm)


def write_volume(v: Volume, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_volume(v))
    return path


def read_volume(
    path: str | Path, subject_id: str = "", modality: Modality | None = None
) -> Volume:
    return decode_volume(Path(path).read_bytes(), subject_id=subject_id, modality=modality)


# =====[정규화]=====


def minmax_normalize(v: Volume) -> Volume:
    """(x - min) / (max - min). 이미 기록이 있으면 원래 범위를 합성해 둡니다."""
    x = v.voxels.astype(np.float64)
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        raise DegenerateInputError(f"cannot normalize a constant volume (value {lo})")

    if v.norm is None:
        norm = NormRecord(lo, hi)
    elif (lo, hi) == (0.0, 1.0):
        norm = v.norm
    else:
        span = v.norm.orig_max - v.norm.orig_min
        norm = NormRecord(v.norm.orig_min + lo * span, v.norm.orig_min + hi * span)
    return v.with_voxels((x - lo) / (hi - lo), norm=norm)


def denormalize(v: Volume) -> Volume:
    if v.norm is None:
        raise DomainError("volume carries no normalization record")
    x = v.voxels.astype(np.float64)
    span = v.norm.orig_max - v.norm.orig_min
    return v.with_voxels(x * span + v.norm.orig_min, norm=None)


# =====[패딩]=====


def pad_offsets(source: Shape3, target: Shape3) -> Shape3:
    if len(source) != len(target):
        raise ShapeMismatchError(f"rank differs: {source} vs {target}")
    if any(t < s for s, t in zip(source, target)):
        raise DomainError(f"target {tuple(target)} is smaller than source {tuple(source)}")
    return tuple((t - s) // 2 for s, t in zip(source, target))  # type: ignore[return-value]


def zero_pad(v: Volume, target: Shape3) -> Volume:
    """가운데 정렬(floor 오프셋) 제로 패딩."""
    target = tuple(int(t) for t in target)
    offsets = pad_offsets(v.shape, target)
    widths = [(o, t - s - o) for s, t, o in zip(v.shape, target, offsets)]
    return v.with_voxels(np.pad(v.voxels, widths, mode="constant", constant_values=0))


def crop(v: Volume, source: Shape3) -> Volume:
    source = tuple(int(s) for s in source)
    offsets = pad_offsets(source, v.shape)
    window = tuple(slice(o, o + s) for o, s in zip(offsets, source))
    return v.with_voxels(v.voxels[window])


# =====[해상도 / 패치]=====


def _check_divisible(shape: tuple[int, ...], factor: int, what: str):
    if factor < 1:
        raise DomainError(f"{what} must be a positive integer, got {factor}")
    if any(extent % factor for extent in shape):
        raise DomainError(f"extents {shape} are not divisible by {what} {factor}")


def downsample(v: Volume, factor: int) -> Volume:
    if factor == 1:
        return v
    _check_divisible(v.shape, factor, "downsample factor")
    x = reduce(
        v.voxels.astype(np.float64),
        "(x a) (y b) (z c) -> x y z",
        "mean",
        a=factor,
        b=factor,
        c=factor,
    )
    return v.with_voxels(x)


def upsample(v: Volume, factor: int) -> Volume:
    if factor == 1:
        return v
    if factor < 1:
        raise DomainError(f"upsample factor must be a positive integer, got {factor}")
    x = repeat(v.voxels, "x y z -> (x a) (y b) (z c)", a=factor, b=factor, c=factor)
    return v.with_voxels(x)


def patchify(voxels: ArrayLike, p: int) -> NDArray[np.float64]:
    """겹치지 않는 p³ 패치를 길이 p³ 벡터로 펼칩니다. 결과는 (패치 수, p³)."""
    x = np.asarray(voxels, dtype=np.float64)
    if x.ndim != 3:
        raise DomainError(f"patchify expects a 3D array, got {x.ndim}D")
    _check_divisible(x.shape, p, "patch size")
    return rearrange(x, "(x p) (y q) (z r) -> (x y z) (p q r)", p=p, q=p, r=p)


def unpatchify(patches: ArrayLike, shape: Shape3, p: int) -> NDArray[np.float64]:
    x = np.asarray(patches, dtype=np.float64)
    _check_divisible(tuple(shape), p, "patch size")
    nx, ny, nz = (s // p for s in shape)
    if x.shape != (nx * ny * nz, p**3):
        raise ShapeMismatchError(
            f"{x.shape} patches cannot fill {tuple(shape)} with patch size {p}"
        )
    return rearrange(
        x, "(x y z) (p q r) -> (x p) (y q) (z r)", x=nx, y=ny, z=nz, p=p, q=p, r=p
    )


@dataclass(frozen=True)
class Resampling:
    """변환 해상도로 가는 사상. 원래 해상도에서 pad_shape 로 패딩한 뒤 downsample 합니다."""

    downsample: int = 1
    pad_shape: tuple[int, ...] = ()

    def __post_init__(self):
        if self.downsample < 1:
            raise DomainError(f"downsample must be a positive integer, got {self.downsample}")
        if len(self.pad_shape) not in (0, 3):
            raise DomainError(f"pad_shape needs three extents, got {self.pad_shape}")

    def forward(self, v: Volume) -> Volume:
        if self.pad_shape:
            v = zero_pad(v, self.pad_shape)
        return downsample(v, self.downsample)

    def inverse(self, v: Volume, original: Shape3) -> Volume:
        v = upsample(v, self.downsample)
        return crop(v, original) if self.pad_shape else v
