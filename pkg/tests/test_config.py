from pathlib import Path
import pytest
from hypothesis import given, strategies as st
from src.config import (
    DataSection,
    MetricsSection,
    RunConfig,
    SampleSection,
    ScheduleSection,
    TrainSection,
    dumps_config,
    load_config,
    loads_config,
    save_config,
)
from src.data.dataset import Direction
from src.errors import ConfigError, DomainError
from src.schedule import LinearSchedule


def test_defaults():
    config = RunConfig()
    assert config.schedule.build() == LinearSchedule(gamma_max=0.125)
    assert config.sample.build().steps == 40
    assert config.train.build().learning_rate == 5e-5
    assert config.metrics.ms_ssim().scale_weights == (0.3, 0.5, 0.2)
    assert config.data.translation_direction is Direction.T1_TO_FA
    assert config.paths.model_path == Path("runs/model.pt")


def test_empty_text_gives_defaults():
    assert loads_config("") == RunConfig()


@given(
    gamma_max=st.floats(0.01, 1.0),
    eta=st.sampled_from([0.0, 0.5, 1.0]),
    steps=st.integers(1, 500),
    lr=st.floats(1e-6, 1.0),
    direction=st.sampled_from([d.value for d in Direction]),
    previews=st.booleans(),
)
def test_ini_round_trip(gamma_max, eta, steps, lr, direction, previews):
    config = RunConfig(
        schedule=ScheduleSection(gamma_max=gamma_max),
        train=TrainSection(learning_rate=lr),
        sample=SampleSection(steps=steps, eta=eta),
        metrics=MetricsSection(previews=previews, kernel_size=7),
        data=DataSection(direction=direction, pad_shape=(64, 64, 64)),
    )
    assert loads_config(dumps_config(config)) == config


def test_partial_sections():
    config = loads_config("[sample]\neta = 1.0\n\n[data]\nshape = 40, 40, 48\n")
    assert config.sample.eta == 1.0
    assert config.sample.steps == 40
    assert config.data.shape == (40, 40, 48)


@pytest.mark.parametrize(
    "text",
    [
        "[nonsense]\nx = 1\n",
        "[sample]\nstride = 2\n",
        "[sample]\nsteps = many\n",
        "[sample]\nsteps = 0\n",
        "[schedule]\ngamma_max = nan\n",
        "[schedule]\nform = cosine\n",
        "[metrics]\npreviews = maybe\n",
        "[data]\ndirection = t1-to-t2\n",
        "[train]\nt_min = 0.9\nt_max = 0.1\n",
        "not an ini file",
    ],
)
def test_invalid_config(text):
    with pytest.raises(ConfigError):
        loads_config(text)


def test_load_and_save(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")
    assert load_config(None) == RunConfig()
    config = RunConfig(sample=SampleSection(workers=3))
    path = save_config(config, tmp_path / "cfg" / "run.ini")
    assert load_config(path) == config


def test_shipped_phantom_config():
    config = load_config(Path(__file__).parent.parent / "configs" / "phantom.ini")
    assert config.metrics.kernel_size == 7
    assert config.data.shape == (32, 32, 32)


def test_overrides_relocate_outputs():
    config = RunConfig().with_overrides(seed=11, out="elsewhere")
    assert config.train.seed == config.sample.seed == 11
    assert config.paths.output == Path("elsewhere")
    assert config.paths.manifest_path == Path("elsewhere/phantom/manifest.csv")
    assert config.paths.report_dir == Path("elsewhere/reports")
    assert RunConfig().with_overrides() == RunConfig()


def test_explicit_paths_win():
    config = loads_config("[paths]\nmanifest = data/m.csv\nmodel = m.pt\n").with_overrides(out="x")
    assert config.paths.manifest_path == Path("data/m.csv")
    assert config.paths.model_path == Path("m.pt")
    assert config.paths.synthetic_dir == Path("x/synthetic")


def test_paths_require(tmp_path):
    RunConfig().paths.require(tmp_path)
    with pytest.raises(FileNotFoundError):
        RunConfig().paths.require(tmp_path / "missing")


def test_sections_validate_directly():
    with pytest.raises(DomainError):
        SampleSection(workers=0)
    with pytest.raises(DomainError):
        DataSection(shape=(32, 32))
