from dataclasses import asdict, is_dataclass
from pathlib import Path
import logging
import sys
import numpy as np
import pandas as pd
import torch
from numpy.typing import ArrayLike
from PIL import Image

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(quiet: bool = False, level: int = logging.INFO):
    """루트 로거에 스트림 핸들러 하나만 붙입니다. quiet 이면 WARNING 이상만 출력합니다."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt="%H:%M:%S"))
    root.addHandler(handler)
    root.setLevel(logging.WARNING if quiet else level)


def seed_everything(seed: int) -> np.random.Generator:
    torch.manual_seed(seed)
    return np.random.default_rng(seed)


def save_table(
    path: str | Path,
    rows: pd.DataFrame | list | object,
    *,
    append: bool = False,
) -> Path:
    """행들을 CSV 로 씁니다. append 이면 헤더는 파일이 처음 만들어질 때만 씁니다."""
    if isinstance(rows, pd.DataFrame):
        df = rows
    else:
        if is_dataclass(rows):
            rows = [rows]
        df = pd.DataFrame([asdict(r) if is_dataclass(r) else r for r in rows])

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    exists = path.is_file()
    df.to_csv(
        path,
        mode="a" if append else "w",
        header=not (append and exists),
        index=False,
    )
    return path


def save_losses(path: str | Path, losses: list[float]) -> Path:
    return save_table(
        path, pd.DataFrame({"step": np.arange(len(losses)), "loss": losses})
    )


def _to_image(slice_2d: ArrayLike) -> Image.Image:
    x = np.clip(np.asarray(slice_2d, dtype=np.float64), 0.0, 1.0)
    pixels = (x.T[::-1] * 255).round().astype(np.uint8)
    return Image.fromarray(np.ascontiguousarray(pixels))


def save_preview(
    path: str | Path,
    source: ArrayLike,
    synthetic: ArrayLike,
    target: ArrayLike,
    axis: int = 2,
) -> Path:
    """원본 / 합성 / 정답 볼륨의 가운데 단면을 가로로 이어 붙인 PNG."""
    volumes = [np.asarray(v) for v in (source, synthetic, target)]
    index = volumes[0].shape[axis] // 2
    images = [_to_image(np.take(v, index, axis=axis)) for v in volumes]

    width = sum(im.width for im in images)
    canvas = Image.new("L", (width, max(im.height for im in images)), 0)
    offset = 0
    for im in images:
        canvas.paste(im, (offset, 0))
        offset += im.width

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    canvas.save(path)
    return path
