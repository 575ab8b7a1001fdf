#!/usr/bin/env python3
"""Regenerate the committed fixture artifacts: indexes and the replay store.

Runs the real CLI commands against the checked-in corpus and benchmark
samples using the deterministic scripted backend in record mode, so the
resulting replay store lets the whole pipeline run offline and
bit-reproducibly. Output: ``fixtures/index/{flat,contextual,hype}`` and
``fixtures/replay/*.json``.
"""

from __future__ import annotations

import shutil
import sys
import tempfile
from pathlib import Path

from vulnscribe.cli import main

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

MODELS = ("model-a", "model-b", "model-c", "model-d")
JUDGE_FLAGS = ["--set", "models.judge1=judge-x", "--set", "models.judge2=judge-y"]
ANALYZE_CELL = "flat-embeddings_only-cross_encoder"


def run(args: list[str]) -> None:
    print("+ vulnscribe " + " ".join(args))
    rc = main(args)
    if rc != 0:
        sys.exit(f"command failed with exit code {rc}: {args}")


def common() -> list[str]:
    return [
        "--replay-dir", str(FIXTURES / "replay"),
        "--index-dir", str(FIXTURES / "index"),
        "--scripted",
        "--mode", "record",
    ]


def main_() -> None:
    for stale in ("replay", "index"):
        shutil.rmtree(FIXTURES / stale, ignore_errors=True)

    for strategy in ("flat", "contextual", "hype"):
        run([
            "ingest", *common(),
            "--corpus", str(FIXTURES / "corpus"),
            "--strategy", strategy,
            "--set", "models.context=ctx-model",
        ])

    with tempfile.TemporaryDirectory() as tmp:
        tmp_path = Path(tmp)
        samples = sorted(p for p in (FIXTURES / "bench").iterdir() if p.is_dir())
        for sample in samples:
            report = tmp_path / sample.name / "report.md"
            run([
                "analyze", *common(),
                "--code", str(sample / "src"),
                "--cell", ANALYZE_CELL,
                "--out", str(report),
                "--model", MODELS[0],
            ])
            run([
                "judge", *common(),
                "--code", str(sample / "src"),
                "--report", str(report),
                "--manifest", str(sample / "manifest.json"),
                "--out", str(tmp_path / sample.name / "verdicts.json"),
                *JUDGE_FLAGS,
            ])

        # one-sample, four-model grid: every configuration cell gets recorded
        grid_bench = tmp_path / "grid_bench"
        shutil.copytree(FIXTURES / "bench" / "cwe119_frame_copy", grid_bench / "cwe119_frame_copy")
        run([
            "experiment", *common(),
            "--bench", str(grid_bench),
            "--models", ",".join(MODELS),
            "--out", str(tmp_path / "grid_out"),
            "--model", MODELS[0],
            "--set", "models.reranker=rerank-m",
            *JUDGE_FLAGS,
        ])

    count = len(list((FIXTURES / "replay").glob("*.json")))
    print(f"replay store holds {count} recorded interactions")


if __name__ == "__main__":
    main_()
