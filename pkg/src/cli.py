"""
명령행 진입점.

    python main.py [--config run.ini] [--seed N] [--out DIR] [--quiet] <command> ...

command 는 phantom, train, translate, evaluate, verify 중 하나입니다.
종료 코드: 0 성공, 1 사용법/설정 오류, 2 데이터 오류, 3 수치 오류.
"""

from __future__ import annotations
from argparse import SUPPRESS, ArgumentParser, Namespace
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import NamedTuple, Sequence
import logging
import sys
import numpy as np
import pandas as pd
from tqdm import tqdm
from src.bridge import estimate_moments
from src.config import RunConfig, load_config
from src.data.dataset import Direction, Split, load_split, patch_pairs
from src.data.phantom import write_corpus
from src.data.volume import Resampling, Volume, read_volume, write_volume
from src.denoiser import load_model, save_model, train
from src.errors import BridgeError, DataError, ModelMismatchError, UsageError, exit_code_for
from src.metrics import SliceAxis, slice_report, subject_report
from src.sampler import SamplerConfig, translate_volume
from src.utils import save_losses, save_preview, save_table, seed_everything, setup_logging
from src.verify import report_frame, run_checks

logger = logging.getLogger(__name__)

SYNTHETIC_SUFFIX = "_synthetic.bvol"


class _Parser(ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _global_flags(parser: ArgumentParser, suppress: bool):
    default = SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="INI 설정 파일")
    parser.add_argument("--seed", type=int, default=default, help="학습/샘플링 시드 덮어쓰기")
    parser.add_argument("--out", default=default, help="출력 디렉터리 덮어쓰기")
    parser.add_argument(
        "--quiet", action="store_true", default=SUPPRESS if suppress else False
    )


def build_parser() -> ArgumentParser:
    parser = _Parser(prog="brainbridge", description="diffusion bridge T1 <-> FA translation")
    _global_flags(parser, suppress=False)

    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)

    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    phantom = commands.add_parser("phantom", parents=[common], help="팬텀 쌍과 매니페스트 생성")
    phantom.add_argument("--count", type=int, default=None)
    phantom.add_argument("--shape", type=int, nargs=3, default=None)

    commands.add_parser("train", parents=[common], help="TinyNet 디노이저 학습")

    translate = commands.add_parser("translate", parents=[common], help="테스트 분할 변환")
    translate.add_argument(
        "--direction", choices=[d.value for d in Direction], default=None
    )

    commands.add_parser("evaluate", parents=[common], help="지표 리포트 작성")
    commands.add_parser("verify", parents=[common], help="성질 검사 모음 실행")
    return parser


# =====[phantom]=====


def cmd_phantom(config: RunConfig, args: Namespace) -> int:
    count = args.count if args.count is not None else config.data.count
    shape = tuple(args.shape) if args.shape else config.data.shape
    seed = args.seed if args.seed is not None else config.data.seed
    manifest = write_corpus(config.paths.corpus_dir, count, shape, seed)
    print(f"wrote {count} phantom pairs, manifest {manifest}")
    return 0


# =====[train]=====


def _resampling(config: RunConfig) -> Resampling:
    return Resampling(downsample=config.data.downsample, pad_shape=config.data.pad_shape)


def cmd_train(config: RunConfig, args: Namespace) -> int:
    paths = config.paths
    paths.require(paths.manifest_path)
    direction = config.data.translation_direction
    resampling = _resampling(config)

    ds = load_split(paths.manifest_path, Split.TRAIN, direction)
    if len(ds) == 0:
        raise DataError(f"{paths.manifest_path}: the train split is empty")
    x0, x1 = patch_pairs(ds, config.data.patch, resampling)
    moments = estimate_moments(
        (resampling.forward(a).voxels, resampling.forward(b).voxels) for a, b in ds
    )
    logger.info("moments %s", moments.to_dict())

    seed_everything(config.train.seed)
    result = train(
        (x0, x1),
        config.train.build(),
        config.schedule.build(),
        moments,
        progress=not args.quiet,
        extra={
            "patch": config.data.patch,
            "downsample": config.data.downsample,
            "pad_shape": list(config.data.pad_shape),
            "direction": direction.value,
        },
    )
    save_model(result.model, paths.model_path)
    losses_path = save_losses(paths.output / "losses.csv", result.losses)
    window = result.losses[-max(config.train.log_every, 1) :]
    final = float(np.mean(window)) if window else float("nan")
    print(f"trained {len(result.losses)} steps, final mean loss {final:.6f}")
    print(f"model {paths.model_path}, loss trace {losses_path}")
    return 0


# =====[translate]=====


class TranslateTask(NamedTuple):
    index: int
    model_path: Path
    condition: Volume
    sampler: SamplerConfig
    target_modality: str
    out_path: Path


def _translate_one(task: TranslateTask) -> Path:
    model = load_model(task.model_path)
    extra = model.extra
    resampling = Resampling(extra.get("downsample", 1), tuple(extra.get("pad_shape", ())))
    rng = np.random.default_rng(task.sampler.seed + task.index)
    synthetic = translate_volume(
        model,
        task.condition,
        task.sampler,
        model.sched,
        patch=int(extra["patch"]),
        resampling=resampling,
        target=task.target_modality,
        rng=rng,
    )
    return write_volume(synthetic, task.out_path)


def _check_model(model, config: RunConfig, direction: Direction):
    sched = config.schedule
    if model.sched.form != sched.form or model.sched.gamma_max != sched.gamma_max:
        raise ModelMismatchError(
            f"model was trained with {model.sched.form} schedule gamma_max={model.sched.gamma_max}, "
            f"config asks for {sched.form} gamma_max={sched.gamma_max}"
        )
    trained = model.extra.get("direction", direction.value)
    if trained != direction.value:
        raise ModelMismatchError(f"model translates {trained}, requested {direction.value}")
    if "patch" not in model.extra:
        raise ModelMismatchError("model file does not record its patch size")


def cmd_translate(config: RunConfig, args: Namespace) -> int:
    paths = config.paths
    direction = Direction(args.direction or config.data.direction)
    model = load_model(paths.model_path)
    _check_model(model, config, direction)
    paths.require(paths.manifest_path)

    ds = load_split(paths.manifest_path, Split.TEST, direction)
    sampler = config.sample.build()
    tasks = [
        TranslateTask(
            index=k,
            model_path=paths.model_path,
            condition=x1,
            sampler=sampler,
            target_modality=direction.target.value,
            out_path=paths.synthetic_dir / f"{x1.subject_id}{SYNTHETIC_SUFFIX}",
        )
        for k, (_, x1) in enumerate(ds)
    ]

    workers = config.sample.workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            written = list(
                tqdm(executor.map(_translate_one, tasks), total=len(tasks), disable=args.quiet)
            )
    else:
        written = [_translate_one(task) for task in tqdm(tasks, disable=args.quiet)]

    if config.metrics.previews:
        for (x0, x1), path in zip(ds, written):
            synthetic = read_volume(path)
            preview = paths.report_dir / "previews" / f"{x1.subject_id}.png"
            save_preview(preview, x1.voxels, synthetic.voxels, x0.voxels)

    print(f"translated {len(written)} subjects ({direction.value}) into {paths.synthetic_dir}")
    return 0


# =====[evaluate]=====


def _matched_pairs(config: RunConfig, direction: Direction) -> list[tuple[str, Volume, Volume]]:
    paths = config.paths
    ds = load_split(paths.manifest_path, Split.TEST, direction)
    expected = {x0.subject_id: x0 for x0, _ in ds}
    found = {
        p.name[: -len(SYNTHETIC_SUFFIX)]: p
        for p in sorted(paths.synthetic_dir.glob(f"*{SYNTHETIC_SUFFIX}"))
    }

    unmatched = sorted(set(expected) ^ set(found))
    if unmatched:
        logger.warning("skipping unmatched subject ids: %s", ", ".join(unmatched))

    return [
        (sid, expected[sid], read_volume(found[sid], sid, direction.target))
        for sid in expected
        if sid in found
    ]


def cmd_evaluate(config: RunConfig, args: Namespace) -> int:
    paths = config.paths
    paths.require(paths.manifest_path, paths.synthetic_dir)
    direction = config.data.translation_direction
    matched = _matched_pairs(config, direction)
    if not matched:
        raise DataError(f"no synthetic volumes in {paths.synthetic_dir} match the test split")

    ssim_cfg = config.metrics.ms_ssim()
    summary = {}
    for axis in SliceAxis:
        frames = []
        for sid, real, synthetic in matched:
            frame = slice_report(real.voxels, synthetic.voxels, axis, ssim_cfg).to_frame()
            frame.insert(0, "subject_id", sid)
            frames.append(frame)
        table = pd.concat(frames, ignore_index=True)
        save_table(paths.report_dir / f"slices_{axis.name.lower()}.csv", table)
        values = table.loc[~table["degenerate_flag"], "ms_ssim"]
        summary[axis.name.lower()] = float(values.mean()) if len(values) else float("nan")

    subjects = subject_report(
        [(real.voxels, synthetic.voxels) for _, real, synthetic in matched],
        ssim_cfg,
        config.metrics.mmd(seed=config.sample.seed),
        [sid for sid, _, _ in matched],
        workers=config.sample.workers,
        progress=not args.quiet,
    )
    save_table(paths.report_dir / "subjects.csv", subjects)

    print(f"evaluated {len(matched)} subjects ({direction.value})")
    for axis, mu in summary.items():
        print(f"slice ms_ssim mu [{axis}] = {mu!r}")
    for column in ("ms_ssim_3d", "psnr_db", "mmd"):
        print(f"mean {column} = {float(subjects[column].astype(float).mean())!r}")
    return 0


# =====[verify]=====


def cmd_verify(config: RunConfig, args: Namespace) -> int:
    results = run_checks(config.schedule.build())
    print(report_frame(results).to_string(index=False))
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 3 if failed else 0


COMMANDS = {
    "phantom": cmd_phantom,
    "train": cmd_train,
    "translate": cmd_translate,
    "evaluate": cmd_evaluate,
    "verify": cmd_verify,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code

    setup_logging(args.quiet)
    try:
        config = load_config(args.config).with_overrides(seed=args.seed, out=args.out)
        return COMMANDS[args.command](config, args)
    except (BridgeError, OSError) as e:
        logger.error("%s failed: %s", args.command, e)
        return exit_code_for(e)
