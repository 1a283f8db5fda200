from __future__ import annotations
from configparser import ConfigParser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, get_args, get_origin, get_type_hints
import numpy as np
from src.data.dataset import Direction
from src.denoiser import TrainConfig
from src.errors import ConfigError, DomainError
from src.metrics import MmdConfig, MsSsimConfig
from src.sampler import SamplerConfig
from src.schedule import DEFAULT_GAMMA_MAX, SCHEDULE_FORMS, BridgeSchedule, make_schedule


@dataclass(frozen=True)
class ScheduleSection:
    gamma_max: float = DEFAULT_GAMMA_MAX
    form: str = "linear"

    def __post_init__(self):
        if self.form not in SCHEDULE_FORMS:
            raise DomainError(f"unknown schedule form {self.form!r}")
        if not self.gamma_max > 0:
            raise DomainError(f"gamma_max must be positive, got {self.gamma_max}")

    def build(self) -> BridgeSchedule:
        return make_schedule(self.form, self.gamma_max)


@dataclass(frozen=True)
class TrainSection:
    learning_rate: float = 5e-5
    batch_size: int = 8
    steps: int = 1000
    t_min: float = 0.001
    t_max: float = 0.999
    seed: int = 0
    hidden: int = 64
    log_every: int = 100

    def __post_init__(self):
        self.build()

    def build(self) -> TrainConfig:
        return TrainConfig(**{f.name: getattr(self, f.name) for f in fields(self)})


@dataclass(frozen=True)
class SampleSection:
    steps: int = 40
    eta: float = 0.0  # 0 = ODE, 1 = SDE
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.build()
        if self.workers < 1:
            raise DomainError(f"workers must be positive, got {self.workers}")

    def build(self) -> SamplerConfig:
        return SamplerConfig(steps=self.steps, eta=self.eta, seed=self.seed)


@dataclass(frozen=True)
class MetricsSection:
    scale_weights: tuple[float, ...] = (0.3, 0.5, 0.2)
    kernel_size: int = 11
    kernel_sigma: float = 1.5
    patch_size: int = 4
    patch_stride: int = 4
    max_patches: int = 1024
    previews: bool = False

    def __post_init__(self):
        self.ms_ssim()
        self.mmd()

    def ms_ssim(self) -> MsSsimConfig:
        return MsSsimConfig(
            scale_weights=self.scale_weights,
            kernel_size=self.kernel_size,
            kernel_sigma=self.kernel_sigma,
        )

    def mmd(self, seed: int = 0) -> MmdConfig:
        return MmdConfig(
            patch_size=self.patch_size,
            patch_stride=self.patch_stride,
            max_patches=self.max_patches,
            seed=seed,
        )


@dataclass(frozen=True)
class DataSection:
    count: int = 20
    shape: tuple[int, ...] = (32, 32, 32)
    seed: int = 7
    patch: int = 2
    downsample: int = 1
    pad_shape: tuple[int, ...] = ()  # 비어 있으면 패딩 없음
    direction: str = Direction.T1_TO_FA.value

    def __post_init__(self):
        Direction(self.direction)
        if len(self.shape) != 3 or len(self.pad_shape) not in (0, 3):
            raise DomainError("shape and pad_shape need three extents")
        if self.patch < 1 or self.downsample < 1 or self.count < 0:
            raise DomainError("patch and downsample must be positive, count nonnegative")

    @property
    def translation_direction(self) -> Direction:
        return Direction(self.direction)


@dataclass(frozen=True)
class PathsSection:
    """manifest, model 이 비어 있으면 output_dir 아래의 기본 위치를 씁니다."""

    manifest: str = ""
    model: str = ""
    output_dir: str = "runs"

    @property
    def output(self) -> Path:
        return Path(self.output_dir)

    @property
    def corpus_dir(self) -> Path:
        return self.output / "phantom"

    @property
    def manifest_path(self) -> Path:
        return Path(self.manifest) if self.manifest else self.corpus_dir / "manifest.csv"

    @property
    def model_path(self) -> Path:
        return Path(self.model) if self.model else self.output / "model.pt"

    @property
    def synthetic_dir(self) -> Path:
        return self.output / "synthetic"

    @property
    def report_dir(self) -> Path:
        return self.output / "reports"

    def require(self, *paths: Path):
        """명령이 읽어야 하는 입력 경로가 실제로 있는지 확인합니다."""
        for path in paths:
            if not Path(path).exists():
                raise FileNotFoundError(f"required input does not exist: {path}")


@dataclass(frozen=True)
class RunConfig:
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    train: TrainSection = field(default_factory=TrainSection)
    sample: SampleSection = field(default_factory=SampleSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    data: DataSection = field(default_factory=DataSection)
    paths: PathsSection = field(default_factory=PathsSection)

    def with_overrides(self, seed: int | None = None, out: str | None = None) -> RunConfig:
        """--seed 는 학습/샘플링 시드를, --out 은 출력 디렉터리를 덮어씁니다."""
        config = self
        if seed is not None:
            config = replace(
                config,
                train=replace(config.train, seed=seed),
                sample=replace(config.sample, seed=seed),
            )
        if out is not None:
            config = replace(config, paths=replace(config.paths, output_dir=str(out)))
        return config


# =====[INI 입출력]=====


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(raw: str, hint: Any, where: str) -> Any:
    raw = raw.strip()
    try:
        if hint is bool:
            lowered = raw.lower()
            if lowered not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(raw)
            return lowered in ("true", "yes", "1", "on")
        if get_origin(hint) is tuple:
            item = get_args(hint)[0]
            return tuple(item(part) for part in raw.split(",") if part.strip())
        if hint is float:
            value = float(raw)
            if not np.isfinite(value):
                raise ValueError(raw)
            return value
        return hint(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {getattr(hint, '__name__', hint)}") from None


def _sections() -> dict[str, type]:
    return {name: hint for name, hint in get_type_hints(RunConfig).items()}


def loads_config(text: str, source: str = "<config>") -> RunConfig:
    parser = ConfigParser()
    try:
        parser.read_string(text, source=source)
    except Exception as e:
        raise ConfigError(f"{source}: {e}") from e

    sections = _sections()
    unknown = set(parser.sections()) - set(sections)
    if unknown:
        raise ConfigError(f"{source}: unknown sections {sorted(unknown)}")

    built = {}
    for name, cls in sections.items():
        hints = get_type_hints(cls)
        values = {}
        if parser.has_section(name):
            for key, raw in parser.items(name):
                if key not in hints:
                    raise ConfigError(f"{source}: unknown key [{name}] {key}")
                values[key] = _parse(raw, hints[key], f"{source} [{name}] {key}")
        try:
            built[name] = cls(**values)
        except ValueError as e:
            raise ConfigError(f"{source} [{name}]: {e}") from e
    return RunConfig(**built)


def dumps_config(config: RunConfig) -> str:
    lines = []
    for name in _sections():
        section = getattr(config, name)
        lines.append(f"[{name}]")
        for f in fields(section):
            lines.append(f"{f.name} = {_format(getattr(section, f.name))}")
        lines.append("")
    return "\n".join(lines)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return loads_config(path.read_text(encoding="utf-8"), source=str(path))


def save_config(config: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_config(config), encoding="utf-8")
    return path
