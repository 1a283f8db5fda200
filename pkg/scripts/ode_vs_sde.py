"""
팬텀 테스트 분할에서 ODE(eta=0) 와 SDE(eta=1) 샘플러 비교
eta : (0, 1)
시드 : (0, 1, 2)
방향 : 학습된 모델이 기록한 방향

먼저 `python main.py --config configs/phantom.ini phantom` 과 `train` 을 실행해 두어야 합니다.
"""

from src.config import load_config
from src.data.dataset import Direction, Split, load_split
from src.data.volume import Resampling
from src.denoiser import load_model
from src.metrics import ms_ssim, patch_mmd, psnr
from src.sampler import SamplerConfig, translate_volume
from src.utils import save_table, setup_logging
from itertools import product
import argparse
import numpy as np
from concurrent.futures import ProcessPoolExecutor, as_completed
from tqdm import tqdm
import os
from typing import NamedTuple
from dataclasses import dataclass


@dataclass
class ComparisonRow:
    subject_id: str
    eta: float
    seed: int
    ms_ssim_3d: float
    psnr_db: float
    mmd: float


class ProcessArg(NamedTuple):
    config_path: str
    subject_index: int
    eta: float
    seed: int


def process(arg: ProcessArg) -> ComparisonRow:
    config_path, subject_index, eta, seed = arg
    config = load_config(config_path)
    model = load_model(config.paths.model_path)
    direction = Direction(model.extra["direction"])

    x0, x1 = load_split(config.paths.manifest_path, Split.TEST, direction).items[subject_index]
    synthetic = translate_volume(
        model,
        x1,
        SamplerConfig(steps=config.sample.steps, eta=eta, seed=seed),
        model.sched,
        patch=int(model.extra["patch"]),
        resampling=Resampling(model.extra["downsample"], tuple(model.extra["pad_shape"])),
        target=direction.target,
        rng=np.random.default_rng(seed),
    )

    real = x0.voxels
    return ComparisonRow(
        subject_id=x0.subject_id,
        eta=eta,
        seed=seed,
        ms_ssim_3d=ms_ssim(real, synthetic.voxels, config.metrics.ms_ssim()),
        psnr_db=psnr(real, synthetic.voxels),
        mmd=patch_mmd(real, synthetic.voxels, config.metrics.mmd(seed)),
    )


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--config", default="configs/phantom.ini")
    args = parser.parse_args()

    setup_logging(quiet=True)
    config = load_config(args.config)
    n_test = len(load_split(config.paths.manifest_path, Split.TEST))

    tasks = [
        ProcessArg(args.config, k, eta, seed)
        for k, eta, seed in product(range(n_test), (0.0, 1.0), (0, 1, 2))
    ]

    result_path = os.path.join(config.paths.output_dir, "ode_vs_sde.csv")

    if os.path.exists(result_path):
        os.remove(result_path)

    print(f"Total Tasks: {len(tasks)}")

    with ProcessPoolExecutor() as executor:
        futures = [executor.submit(process, task) for task in tasks]

        for future in tqdm(as_completed(futures), total=len(tasks)):
            save_table(result_path, future.result(), append=True)


if __name__ == "__main__":
    main()
