"""Benchmark loading, the 10-cell configuration grid, and aggregation.

Benchmark layout: ``<root>/<sample_id>/`` holds the source tree (or a
``src/`` subdirectory) plus one ``manifest.json`` with the ground truth.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import ingest_codebase
from .errors import AggregationError, BenchmarkError
from .judge import (
    DIMENSIONS,
    EvaluationSummary,
    GroundTruthAnnotation,
    JudgeVerdict,
    judge_report,
)
from .pipeline import PipelineContext, run_pipeline
from .retrieval import RetrievalConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TestCase:
    sample_id: str
    code_root: Path
    annotation: GroundTruthAnnotation


@dataclass(frozen=True)
class ExperimentRecord:
    model_id: str
    config_label: str
    sample_id: str
    cwe_id: str
    summary: EvaluationSummary | None
    error: str | None = None
    timings: dict[str, float] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class GridSummary:
    config_labels: tuple[str, ...]
    cell_means: dict[tuple[str, str], float]  # (model, config) -> mean s_overall
    dimension_means: dict[tuple[str, str, str], float]  # (model, config, dim)
    model_variance: dict[str, float]  # population variance over config means
    best_config: dict[str, str]
    cwe_remediation: dict[tuple[str, str], tuple[int, int]]  # (model, cwe) -> (successes, cases)
    boxplot: dict[str, tuple[float, float, float, float, float]]


def load_annotation(path: Path, sample_id: str) -> GroundTruthAnnotation:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise BenchmarkError(f"sample {sample_id}: unreadable manifest: {err}") from err
    try:
        annotation = GroundTruthAnnotation(
            sample_id=data["sample_id"],
            is_vulnerable=bool(data["is_vulnerable"]),
            cwe_id=data["cwe_id"],
            vulnerable_lines=tuple(int(x) for x in data.get("vulnerable_lines", [])),
            description=data["description"],
            fix_hint=data.get("fix_hint"),
        )
    except Exception as err:  # noqa: BLE001 - any malformed field
        raise BenchmarkError(f"sample {sample_id}: bad manifest: {err}") from err
    if annotation.sample_id != sample_id:
        raise BenchmarkError(
            f"sample {sample_id}: manifest sample_id {annotation.sample_id!r} disagrees"
        )
    return annotation


def load_benchmark(root: str | Path) -> list[TestCase]:
    """One TestCase per sample directory under root."""
    root = Path(root)
    if not root.is_dir():
        raise BenchmarkError(f"benchmark root does not exist: {root}")
    cases: list[TestCase] = []
    for sample_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        manifests = list(sample_dir.glob("manifest.json"))
        if not manifests:
            raise BenchmarkError(f"sample {sample_dir.name}: no manifest.json")
        annotation = load_annotation(manifests[0], sample_dir.name)
        code_root = sample_dir / "src" if (sample_dir / "src").is_dir() else sample_dir
        cases.append(TestCase(sample_dir.name, code_root, annotation))
    if not cases:
        raise BenchmarkError(f"benchmark root has no sample directories: {root}")
    return cases


def enumerate_grid() -> list[RetrievalConfig]:
    """The fixed 10-cell grid: {flat, contextual} x {embeddings_only, hybrid}
    x {cross_encoder, llm} plus the two hype cells, in table order."""
    configs: list[RetrievalConfig] = []
    for chunking in ("flat", "contextual"):
        for reranker in ("cross_encoder", "llm"):
            for retrieval in ("embeddings_only", "hybrid"):
                configs.append(
                    RetrievalConfig(chunking=chunking, retrieval=retrieval, reranker=reranker)
                )
    for reranker in ("cross_encoder", "llm"):
        configs.append(RetrievalConfig(chunking="hype", retrieval="hype", reranker=reranker))
    return configs


def config_slug(config: RetrievalConfig) -> str:
    return f"{config.chunking}-{config.retrieval}-{config.reranker}"


_SAFE_RE = re.compile(r"[^A-Za-z0-9_.-]+")


def _cell_path(out_dir: Path, model_id: str, config: RetrievalConfig, sample_id: str) -> Path:
    model = _SAFE_RE.sub("_", model_id)
    return out_dir / "cells" / f"{model}__{config_slug(config)}__{sample_id}.json"


def _record_to_json(record: ExperimentRecord) -> dict:
    data = {
        "model_id": record.model_id,
        "config": record.config_label,
        "sample_id": record.sample_id,
        "cwe_id": record.cwe_id,
        "error": record.error,
        "timings": record.timings,
        "warnings": list(record.warnings),
        "summary": None,
    }
    if record.summary is not None:
        data["summary"] = {
            "sample_id": record.summary.sample_id,
            "s_overall": record.summary.s_overall,
            "remediation_success": record.summary.remediation_success,
            "verdicts": [v.to_dict() | {"judge_id": v.judge_id} for v in record.summary.verdicts],
        }
    return data


def _record_from_json(data: dict) -> ExperimentRecord:
    from .judge import CriterionScore

    summary = None
    if data.get("summary"):
        s = data["summary"]
        verdicts = []
        for v in s["verdicts"]:
            rq = v["remediation_quality"]
            verdicts.append(
                JudgeVerdict(
                    judge_id=v.get("judge_id", "judge"),
                    structural_integrity=CriterionScore(**v["structural_integrity"]),
                    factual_grounding=CriterionScore(**v["factual_grounding"]),
                    code_reasoning_quality=CriterionScore(**v["code_reasoning_quality"]),
                    remediation_quality=CriterionScore(rq["score"], rq["justification"]),
                    fix_addresses_root_cause=rq["fix_addresses_root_cause"],
                    syntax_valid=rq["syntax_valid"],
                    overall_score=v["overall_score"],
                )
            )
        summary = EvaluationSummary(
            sample_id=s["sample_id"],
            verdicts=(verdicts[0], verdicts[1]),
            s_overall=s["s_overall"],
            remediation_success=s["remediation_success"],
        )
    return ExperimentRecord(
        model_id=data["model_id"],
        config_label=data["config"],
        sample_id=data["sample_id"],
        cwe_id=data["cwe_id"],
        summary=summary,
        error=data.get("error"),
        timings=data.get("timings", {}),
        warnings=tuple(data.get("warnings", ())),
    )


def run_grid(
    cases: list[TestCase],
    models: list[str],
    ctx: PipelineContext,
    out_dir: str | Path,
    resume: bool = False,
    configs: list[RetrievalConfig] | None = None,
) -> list[ExperimentRecord]:
    """Execute analyze -> render -> judge for every (model, config, case).

    Each cell is persisted as its own JSON file immediately after completion;
    with resume=True, already-persisted cells are loaded instead of re-run.
    Per-sample failures become error records and the run continues.
    ``configs`` restricts the run to a grid subset (default: the full grid).
    """
    from dataclasses import replace as dc_replace

    out_dir = Path(out_dir)
    (out_dir / "cells").mkdir(parents=True, exist_ok=True)
    records: list[ExperimentRecord] = []
    grid = enumerate_grid() if configs is None else list(configs)
    for model_id in models:
        agent_params = dc_replace(ctx.agent_params, model_id=model_id)
        model_ctx = PipelineContext(
            llm=ctx.llm,
            indexes=ctx.indexes,
            agent_params=agent_params,
            rerank_params=ctx.rerank_params,
            cross_encoder=ctx.cross_encoder,
            judges=ctx.judges,
            query_cap_chars=ctx.query_cap_chars,
        )
        for config in grid:
            for case in cases:
                cell = _cell_path(out_dir, model_id, config, case.sample_id)
                if resume and cell.exists():
                    records.append(_record_from_json(json.loads(cell.read_text())))
                    continue
                record = _run_cell(case, config, model_id, model_ctx)
                cell.write_text(json.dumps(_record_to_json(record), indent=2) + "\n")
                records.append(record)
    return records


def _run_cell(
    case: TestCase, config: RetrievalConfig, model_id: str, ctx: PipelineContext
) -> ExperimentRecord:
    label = config_slug(config)
    start = time.monotonic()
    try:
        from dataclasses import replace as dc_replace

        payload = ingest_codebase(case.code_root)
        if payload.sample_id != case.sample_id:
            payload = dc_replace(payload, sample_id=case.sample_id)
        result = run_pipeline(payload, config, ctx)
        summary = judge_report(
            payload, case.annotation, result.report_markdown, ctx.llm, ctx.judges[:2]
        )
        timings = dict(result.phase_timings)
        timings["total"] = time.monotonic() - start
        return ExperimentRecord(
            model_id=model_id,
            config_label=label,
            sample_id=case.sample_id,
            cwe_id=case.annotation.cwe_id,
            summary=summary,
            timings=timings,
            warnings=result.warnings,
        )
    except Exception as err:  # noqa: BLE001 - grid keeps going
        logger.warning("cell (%s, %s, %s) failed: %s", model_id, label, case.sample_id, err)
        return ExperimentRecord(
            model_id=model_id,
            config_label=label,
            sample_id=case.sample_id,
            cwe_id=case.annotation.cwe_id,
            summary=None,
            error=str(err),
            timings={"total": time.monotonic() - start},
        )


def aggregate(records: list[ExperimentRecord]) -> GridSummary:
    """Pool records into per-cell means, per-dimension means, per-model
    cross-config population variance, and per-CWE remediation ratios for the
    best config of each model."""
    usable = [r for r in records if r.summary is not None]
    if not usable:
        raise AggregationError("no usable experiment records")
    labels = tuple(config_slug(c) for c in enumerate_grid())
    by_cell: dict[tuple[str, str], list[ExperimentRecord]] = {}
    for rec in usable:
        by_cell.setdefault((rec.model_id, rec.config_label), []).append(rec)

    cell_means: dict[tuple[str, str], float] = {}
    dimension_means: dict[tuple[str, str, str], float] = {}
    for (model, label), cell_records in by_cell.items():
        cell_means[(model, label)] = float(
            np.mean([r.summary.s_overall for r in cell_records])
        )
        for i, dim in enumerate(DIMENSIONS):
            per_sample = [
                (r.summary.verdicts[0].scores()[i] + r.summary.verdicts[1].scores()[i]) / 2.0
                for r in cell_records
            ]
            dimension_means[(model, label, dim)] = float(np.mean(per_sample))

    models = sorted({m for m, _ in cell_means})
    model_variance: dict[str, float] = {}
    best_config: dict[str, str] = {}
    boxplot: dict[str, tuple[float, float, float, float, float]] = {}
    for model in models:
        means = [cell_means[(model, label)] for label in labels if (model, label) in cell_means]
        model_variance[model] = float(np.var(means))  # population variance
        best_config[model] = max(
            (label for label in labels if (model, label) in cell_means),
            key=lambda label: cell_means[(model, label)],
        )
        q = np.percentile(means, [0, 25, 50, 75, 100], method="linear")
        boxplot[model] = tuple(float(x) for x in q)

    cwe_remediation: dict[tuple[str, str], tuple[int, int]] = {}
    for model in models:
        chosen = best_config[model]
        for rec in by_cell.get((model, chosen), []):
            successes, cases = cwe_remediation.get((model, rec.cwe_id), (0, 0))
            cwe_remediation[(model, rec.cwe_id)] = (
                successes + int(rec.summary.remediation_success),
                cases + 1,
            )

    return GridSummary(
        config_labels=labels,
        cell_means=cell_means,
        dimension_means=dimension_means,
        model_variance=model_variance,
        best_config=best_config,
        cwe_remediation=cwe_remediation,
        boxplot=boxplot,
    )


def export_results(summary: GridSummary, records: list[ExperimentRecord], out_dir: str | Path) -> list[Path]:
    """Write the delimited result tables; re-export over the same records is
    byte-identical."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise OSError(f"cannot create results directory {out_dir}: {err}") from err
    models = sorted({m for m, _ in summary.cell_means})
    written: list[Path] = []

    grid_path = out_dir / "grid_scores.csv"
    with grid_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", *summary.config_labels])
        for model in models:
            writer.writerow(
                [model]
                + [
                    f"{summary.cell_means[(model, label)]:.4f}"
                    if (model, label) in summary.cell_means
                    else ""
                    for label in summary.config_labels
                ]
            )
    written.append(grid_path)

    dim_path = out_dir / "dimension_scores.csv"
    with dim_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "config", "dimension", "mean_score"])
        for model in models:
            for label in summary.config_labels:
                for dim in DIMENSIONS:
                    key = (model, label, dim)
                    if key in summary.dimension_means:
                        writer.writerow([model, label, dim, f"{summary.dimension_means[key]:.4f}"])
    written.append(dim_path)

    cwe_path = out_dir / "cwe_remediation.csv"
    with cwe_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "best_config", "cwe_id", "cases", "successes", "ratio"])
        for (model, cwe), (successes, cases) in sorted(summary.cwe_remediation.items()):
            writer.writerow(
                [model, summary.best_config[model], cwe, cases, successes, f"{successes / cases:.4f}"]
            )
    written.append(cwe_path)

    box_path = out_dir / "boxplot_data.csv"
    with box_path.open("w", newline="") as fh:
        fh.write("# quartile_method=linear_interpolation\n")
        writer = csv.writer(fh)
        writer.writerow(["model", "min", "q1", "median", "q3", "max"])
        for model in models:
            writer.writerow([model] + [f"{x:.4f}" for x in summary.boxplot[model]])
    written.append(box_path)
    return written
