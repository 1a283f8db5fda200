from dataclasses import dataclass
import os
import hypothesis
import numpy as np
import pytest
from src.denoiser import GaussianTaskParams
from src.schedule import LinearSchedule

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=500, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


@dataclass(frozen=True)
class BrokenEndSchedule(LinearSchedule):
    """γ(1) 이 0 이 아니도록 일부러 망가뜨린 스케줄."""

    form: str = "broken-end"

    def _gamma_sq(self, t):
        return 4.0 * self.gamma_max**2 * t * (1.0 - t) + 1e-3 * t


@pytest.fixture
def sched():
    return LinearSchedule()


@pytest.fixture
def params():
    return GaussianTaskParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def broken_sched():
    return BrokenEndSchedule()
