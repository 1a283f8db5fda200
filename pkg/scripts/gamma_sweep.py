"""
γ_max 에 따른 오라클 샘플링 품질과 이산화 일관성
γ_max : (0.125, 0.15, 0.175, 0.2, 0.225, 0.25)
스텝 수 : (20, 40)
"""

from src.bridge import sample_xt
from src.denoiser import AnalyticPosterior, GaussianTaskParams
from src.sampler import SamplerConfig, euler_step, posterior_step, sample
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
class SweepRow:
    gamma_max: float
    steps: int
    mean_error: float
    variance_ratio: float
    step_gap: float
    seed: int


class ProcessArg(NamedTuple):
    index: int
    gamma_max: float
    steps: int


def step_gap(sched: LinearSchedule, params: GaussianTaskParams, dt: float, seed: int) -> float:
    """t = 0.5 에서 오일러 스텝과 사후 재샘플링 스텝의 평균 차이."""
    model = AnalyticPosterior(params, sched)
    rng = np.random.default_rng(seed)
    x0, x1 = (v[:, 0] for v in params.sample(5_000, rng))
    xt = sample_xt(x0, x1, 0.5, sched, rng)
    x0_hat = model.predict(0.5, xt, x1)
    alpha, beta, _ = sched.coefficients(0.5)
    z = (xt - alpha * x0_hat - beta * x1) / sched.gamma(0.5)
    euler = euler_step(xt, x0_hat, x1, 0.5, dt, sched, 1.0, np.random.default_rng(seed))
    post = posterior_step(x0_hat, x1, z, 0.5 - dt, dt, sched, 1.0, np.random.default_rng(seed))
    return float(np.mean(np.abs(euler - post)))


def process(arg: ProcessArg) -> SweepRow:
    index, gamma_max, steps = arg
    sched = LinearSchedule(gamma_max=gamma_max)
    params = GaussianTaskParams()
    model = AnalyticPosterior(params, sched)

    condition = np.full(20_000, 1.0)
    out = sample(
        model, condition, SamplerConfig(steps=steps, eta=1.0), sched, np.random.default_rng(index)
    )
    mean, var = (float(v[0]) for v in params.conditional(condition[:1]))

    return SweepRow(
        gamma_max=gamma_max,
        steps=steps,
        mean_error=float(out.mean()) - mean,
        variance_ratio=float(out.var()) / var,
        step_gap=step_gap(sched, params, 1.0 / steps, index),
        seed=index,
    )


def main():
    setup_logging(quiet=True)
    tasks = [
        ProcessArg(i, gamma_max, steps)
        for i, (gamma_max, steps) in enumerate(
            product((0.125, 0.15, 0.175, 0.2, 0.225, 0.25), (20, 40))
        )
    ]

    result_path = "data/gamma_sweep/results.csv"

    if os.path.exists(result_path):
        os.remove(result_path)

    print(f"Total Tasks: {len(tasks)}")

    with ProcessPoolExecutor() as executor:
        futures = [executor.submit(process, task) for task in tasks]

        for future in tqdm(as_completed(futures), total=len(tasks)):
            save_table(result_path, future.result(), append=True)


if __name__ == "__main__":
    main()
