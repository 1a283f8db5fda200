"""
팬텀 파이프라인 전체 실행: phantom → train → translate → evaluate
방향 : (t1-to-fa, fa-to-t1)

같은 팬텀 집합을 공유하고, 방향마다 설정 파일과 출력 디렉터리를 따로 만들어 병렬로 돌립니다.
"""

from src.cli import main as cli_main
from src.config import load_config, save_config
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import replace
from tqdm import tqdm
import argparse
from pathlib import Path
from typing import NamedTuple


class ProcessArg(NamedTuple):
    config: str
    direction: str
    corpus: str
    out: str


def process(arg: ProcessArg) -> tuple[str, int]:
    config_path, direction, corpus, out = arg

    config = load_config(config_path)
    config = replace(
        config,
        data=replace(config.data, direction=direction),
        paths=replace(config.paths, manifest=f"{corpus}/manifest.csv", output_dir=out),
    )
    run_config = save_config(config, Path(out) / "run.ini")

    for command in ("train", "translate", "evaluate"):
        code = cli_main(["--config", str(run_config), "--quiet", command])
        if code != 0:
            return direction, code
    return direction, 0


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--config", default="configs/phantom.ini")
    parser.add_argument("--out", default="runs/pipeline")
    args = parser.parse_args()

    code = cli_main(["--config", args.config, "--out", args.out, "--quiet", "phantom"])
    if code != 0:
        raise SystemExit(code)

    corpus = f"{args.out}/phantom"
    tasks = [
        ProcessArg(args.config, direction, corpus, f"{args.out}/{direction}")
        for direction in ("t1-to-fa", "fa-to-t1")
    ]

    print(f"Total Tasks: {len(tasks)}")

    with ProcessPoolExecutor() as executor:
        futures = [executor.submit(process, task) for task in tasks]

        for future in tqdm(as_completed(futures), total=len(tasks)):
            direction, code = future.result()
            print(f"{direction}: exit code {code}")


if __name__ == "__main__":
    main()
