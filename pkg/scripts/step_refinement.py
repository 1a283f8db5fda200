"""
가우시안 오라클에서 스텝 수에 따른 샘플 모멘트 오차
스텝 수 : (10, 20, 40, 80, 160, 320)
eta : (0, 1)
조건 x1 : (-1, 0, 1)
"""

from src.denoiser import AnalyticPosterior, GaussianTaskParams
from src.sampler import SamplerConfig, sample
from src.schedule import LinearSchedule
from src.utils import save_table, setup_logging
from itertools import product
import numpy as np
from concurrent.futures import ProcessPoolExecutor, as_completed
from tqdm import tqdm
import os
from typing import NamedTuple
from dataclasses import dataclass


@dataclass
class RefinementRow:
    steps: int
    eta: float
    x1: float
    mean_error: float
    variance_ratio: float
    runs: int
    seed: int


class ProcessArg(NamedTuple):
    index: int
    steps: int
    eta: float
    x1: float


def process(arg: ProcessArg) -> RefinementRow:
    index, steps, eta, x1 = arg
    runs = 20_000
    sched = LinearSchedule()
    params = GaussianTaskParams()
    model = AnalyticPosterior(params, sched)

    condition = np.full(runs, x1)
    out = sample(
        model,
        condition,
        SamplerConfig(steps=steps, eta=eta, seed=index),
        sched,
        np.random.default_rng(index),
    )
    mean, var = (float(v[0]) for v in params.conditional(condition[:1]))

    return RefinementRow(
        steps=steps,
        eta=eta,
        x1=x1,
        mean_error=float(out.mean()) - mean,
        variance_ratio=float(out.var()) / var,
        runs=runs,
        seed=index,
    )


def main():
    setup_logging(quiet=True)
    tasks = [
        ProcessArg(i, steps, eta, x1)
        for i, (steps, eta, x1) in enumerate(
            product((10, 20, 40, 80, 160, 320), (0.0, 1.0), (-1.0, 0.0, 1.0))
        )
    ]

    result_path = "data/step_refinement/results.csv"

    if os.path.exists(result_path):
        os.remove(result_path)

    print(f"Total Tasks: {len(tasks)}")

    with ProcessPoolExecutor() as executor:
        futures = [executor.submit(process, task) for task in tasks]

        for future in tqdm(as_completed(futures), total=len(tasks)):
            save_table(result_path, future.result(), append=True)


if __name__ == "__main__":
    main()
