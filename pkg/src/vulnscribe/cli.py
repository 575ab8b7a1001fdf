"""Command-line entry point wiring every module together.

Subcommands: ``config`` (dump the effective parameter set), ``ingest`` (build
and persist an index), ``query`` (ad-hoc retrieval), ``analyze`` (one code
sample to a rendered report), ``judge`` (score a report against ground truth),
and ``experiment`` (the full configuration-grid run with CSV aggregation).

Exit codes: 0 success, 1 partial/degraded (a summary is printed), 2
configuration or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .agents import ingest_codebase
from .bench import aggregate, export_results, load_annotation, load_benchmark, run_grid
from .config import AppConfig
from .corpus import (
    contextualize_chunks,
    flat_chunk,
    generate_hype_questions,
    load_corpus,
    load_toc,
    split_chapters,
)
from .errors import (
    BenchmarkError,
    ConfigError,
    CorpusParseError,
    IngestionError,
    TemplateError,
    ValidationError,
    VulnscribeError,
)
from .judge import judge_report
from .pipeline import PipelineContext, run_pipeline
from .retrieval import (
    RemoteCrossEncoderScorer,
    RetrievalConfig,
    Retriever,
    TokenOverlapScorer,
    VectorIndex,
    build_index,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2

_CONFIG_ERRORS = (
    ConfigError,
    CorpusParseError,
    IngestionError,
    BenchmarkError,
    TemplateError,
    ValidationError,
)


def parse_cell(slug: str) -> RetrievalConfig:
    """Parse a grid-cell slug like ``flat-hybrid-cross_encoder``."""
    parts = slug.split("-")
    if len(parts) != 3:
        raise ConfigError(
            f"bad grid cell {slug!r}; expected <chunking>-<retrieval>-<reranker>"
        )
    return RetrievalConfig(chunking=parts[0], retrieval=parts[1], reranker=parts[2])


def _load_config(args: argparse.Namespace) -> AppConfig:
    cfg = AppConfig.load(args.config_file)
    for item in args.set or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        cfg.set(key, value)
    if args.mode:
        cfg.set("gateway.mode", args.mode)
    if args.replay_dir:
        cfg.set("paths.replay_dir", args.replay_dir)
    if args.index_dir:
        cfg.set("paths.index_dir", args.index_dir)
    if args.scripted:
        cfg.set("gateway.scripted", True)
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg.set("gateway.max_in_flight", args.jobs)
    if getattr(args, "model", None):
        # one model drives all three report agents
        for role in ("explorer", "analyst", "reporter"):
            cfg.set(f"models.{role}", args.model)
    return cfg


def _write_run_manifest(cfg: AppConfig, command: str, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "gateway_mode": cfg.data["gateway"]["mode"],
        "version": __version__,
    }
    (out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _cross_encoder(cfg: AppConfig):
    url = cfg.data["gateway"]["cross_encoder_url"]
    return RemoteCrossEncoderScorer(url) if url else TokenOverlapScorer()


def _pipeline_context(cfg: AppConfig, cell: RetrievalConfig) -> PipelineContext:
    llm = cfg.build_gateway()
    index_dir = cfg.path("index_dir") / cell.chunking
    if not (index_dir / "manifest.json").exists():
        raise ConfigError(
            f"no {cell.chunking!r} index under {index_dir}; build one with "
            f"`vulnscribe ingest --strategy {cell.chunking}`"
        )
    indexes = {cell.chunking: VectorIndex.load(index_dir)}
    rerank_params = (
        cfg.llm_params("reranker") if cell.reranker == "llm" else None
    )
    judges = ()
    if cfg.model_id("judge1", required=False) and cfg.model_id("judge2", required=False):
        judges = (
            ("judge1", cfg.llm_params("judge1")),
            ("judge2", cfg.llm_params("judge2")),
        )
    return PipelineContext(
        llm=llm,
        indexes=indexes,
        agent_params=cfg.llm_params("explorer"),
        rerank_params=rerank_params,
        cross_encoder=_cross_encoder(cfg),
        judges=judges,
        query_cap_chars=int(cfg.data["agents"]["query_cap_chars"]),
    )


# -- subcommands -------------------------------------------------------------


def cmd_config(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    print(cfg.dump())
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    strategy = args.strategy
    documents = load_corpus(args.corpus or cfg.path("corpus_dir"))
    if args.pages_dir:
        pages = [
            p.read_text(encoding="utf-8")
            for p in sorted(Path(args.pages_dir).glob("*.md"))
        ]
        if not args.toc:
            raise ConfigError("--pages-dir requires --toc")
        documents += split_chapters(pages, load_toc(args.toc))
    chunk_cfg = cfg.chunking_config(strategy)
    llm = cfg.build_gateway()
    chunks = []
    for doc in documents:
        doc_chunks = flat_chunk(doc, chunk_cfg)
        if strategy == "contextual":
            doc_chunks = contextualize_chunks(
                doc, doc_chunks, llm, chunk_cfg, cfg.llm_params("context")
            )
        elif strategy == "hype":
            doc_chunks = generate_hype_questions(
                doc_chunks, llm, chunk_cfg, cfg.llm_params("context")
            )
        chunks.extend(doc_chunks)
    index = build_index(
        chunks,
        strategy,
        llm.embed,
        dim=int(cfg.data["embedding"]["dim"]),
        **cfg.index_kwargs(),
    )
    target = cfg.path("index_dir") / strategy
    index.save(target)
    print(
        f"documents={len(documents)} chunks={len(chunks)} records={len(index)} "
        f"strategy={strategy} index={target}"
    )
    return EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    cell = cfg.retrieval_config(
        chunking=args.chunking,
        retrieval=args.retrieval,
        reranker=args.reranker,
        top_k=args.top_k,
        num_candidates=args.num_candidates,
    )
    llm = cfg.build_gateway()
    index_dir = cfg.path("index_dir") / cell.chunking
    if not (index_dir / "manifest.json").exists():
        raise ConfigError(
            f"no {cell.chunking!r} index under {index_dir}; build one with "
            f"`vulnscribe ingest --strategy {cell.chunking}`"
        )
    retriever = Retriever(
        VectorIndex.load(index_dir),
        llm,
        cross_encoder=_cross_encoder(cfg),
        rerank_params=cfg.llm_params("reranker") if cell.reranker == "llm" else None,
    )
    chunks = retriever.retrieve(cell, args.query)
    for c in chunks:
        rerank = f"{c.rerank_score:.4f}" if c.rerank_score is not None else "-"
        preview = " ".join(c.raw_text.split())[:80]
        print(f"{c.rank:2d}  final={c.score_final:.4f}  rerank={rerank}  {c.chunk_id}  {preview}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    cell = parse_cell(args.cell)
    ctx = _pipeline_context(cfg, cell)
    payload = ingest_codebase(args.code)
    result = run_pipeline(payload, cell, ctx)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(result.report_markdown, encoding="utf-8")
    sidecar = {
        "sample_id": result.sample_id,
        "cell": args.cell,
        "retrieved_chunk_ids": list(result.retrieved_chunk_ids),
        "phase_timings": result.phase_timings,
        "warnings": list(result.warnings),
    }
    out.with_suffix(out.suffix + ".runlog.json").write_text(
        json.dumps(sidecar, indent=2) + "\n", encoding="utf-8"
    )
    _write_run_manifest(cfg, "analyze", out.parent)
    print(f"report written to {out}")
    return EXIT_OK


def cmd_judge(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    # both judge roles must be configured before any model is contacted
    judge_params = (
        ("judge1", cfg.llm_params("judge1")),
        ("judge2", cfg.llm_params("judge2")),
    )
    payload = ingest_codebase(args.code)
    truth = load_annotation(Path(args.manifest), payload.sample_id)
    report_markdown = Path(args.report).read_text(encoding="utf-8")
    llm = cfg.build_gateway()
    summary = judge_report(payload, truth, report_markdown, llm, judge_params)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "sample_id": summary.sample_id,
        "s_overall": summary.s_overall,
        "remediation_success": summary.remediation_success,
        "verdicts": [v.to_dict() | {"judge_id": v.judge_id} for v in summary.verdicts],
    }
    out.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    _write_run_manifest(cfg, "judge", out.parent)
    print(f"verdicts written to {out}")
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    models = [m for m in args.models.split(",") if m]
    if not models:
        raise ConfigError("--models must list at least one model id")
    judges = (
        ("judge1", cfg.llm_params("judge1")),
        ("judge2", cfg.llm_params("judge2")),
    )
    llm = cfg.build_gateway()
    indexes = {}
    for strategy in ("flat", "contextual", "hype"):
        directory = cfg.path("index_dir") / strategy
        if not (directory / "manifest.json").exists():
            raise ConfigError(
                f"missing {strategy!r} index under {directory}; the grid needs all "
                "three (run ingest per strategy)"
            )
        indexes[strategy] = VectorIndex.load(directory)
    ctx = PipelineContext(
        llm=llm,
        indexes=indexes,
        agent_params=cfg.llm_params("explorer"),
        rerank_params=cfg.llm_params("reranker"),
        cross_encoder=_cross_encoder(cfg),
        judges=judges,
        query_cap_chars=int(cfg.data["agents"]["query_cap_chars"]),
    )
    cases = load_benchmark(args.bench or cfg.path("bench_root"))
    out_dir = Path(args.out)
    records = run_grid(cases, models, ctx, out_dir, resume=args.resume)
    summary = aggregate(records)
    written = export_results(summary, records, out_dir)
    _write_run_manifest(cfg, "experiment", out_dir)
    failures = sum(1 for r in records if r.error is not None)
    print(
        f"cells={len(records)} failures={failures} "
        f"tables={', '.join(p.name for p in written)} out={out_dir}"
    )
    if failures:
        for r in records:
            if r.error is not None:
                print(f"  FAILED {r.model_id} {r.config_label} {r.sample_id}: {r.error}")
        return EXIT_PARTIAL
    return EXIT_OK


# -- argument parsing --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vulnscribe",
        description="RAG-assisted vulnerability analysis, reporting, and evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config-file", help="JSON config file overriding defaults")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config leaf, e.g. gateway.mode=record")
        p.add_argument("--mode", choices=("replay", "record", "live"))
        p.add_argument("--replay-dir", help="replay store directory")
        p.add_argument("--index-dir", help="index root directory")
        p.add_argument("--scripted", action="store_true",
                       help="use the deterministic offline backend")
        p.add_argument("--jobs", type=int, help="parallel request budget")

    p = sub.add_parser("config", help="print the effective configuration as JSON")
    common(p)
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("ingest", help="chunk the corpus and build one index")
    common(p)
    p.add_argument("--corpus", help="corpus directory of markdown files")
    p.add_argument("--strategy", choices=("flat", "contextual", "hype"), default="flat")
    p.add_argument("--pages-dir", help="directory of per-page markdown to consolidate")
    p.add_argument("--toc", help="JSON table of contents for --pages-dir")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("query", help="run one retrieval query against an index")
    common(p)
    p.add_argument("--query", required=True)
    p.add_argument("--chunking", choices=("flat", "contextual", "hype"))
    p.add_argument("--retrieval", choices=("embeddings_only", "hybrid", "hype"))
    p.add_argument("--reranker", choices=("cross_encoder", "llm", "none"))
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--num-candidates", type=int, dest="num_candidates")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("analyze", help="analyze one code sample into a report")
    common(p)
    p.add_argument("--code", required=True, help="source file or directory")
    p.add_argument("--cell", required=True,
                   help="grid cell slug: <chunking>-<retrieval>-<reranker>")
    p.add_argument("--out", required=True, help="output markdown report path")
    p.add_argument("--model", help="model id for all three report agents")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("judge", help="score a rendered report against ground truth")
    common(p)
    p.add_argument("--code", required=True)
    p.add_argument("--report", required=True, help="rendered markdown report")
    p.add_argument("--manifest", required=True, help="ground-truth manifest JSON")
    p.add_argument("--out", required=True, help="output verdicts JSON path")
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("experiment", help="run the configuration grid over a benchmark")
    common(p)
    p.add_argument("--bench", help="benchmark root directory")
    p.add_argument("--models", required=True, help="comma-separated model ids")
    p.add_argument("--out", required=True, help="results directory")
    p.add_argument("--resume", action="store_true", help="skip completed cells")
    p.add_argument("--model", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except VulnscribeError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
