"""End-to-end glue: one code sample through retrieval, agents, and rendering."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .agents import (
    AnalystFindings,
    CodePayload,
    ExplorerFindings,
    VulnReport,
    analyze,
    explore,
    generate_report,
    rag_retrieval,
    render_markdown,
)
from .errors import ConfigError
from .gateway import LlmGateway, LlmParams
from .retrieval import PairScorer, RetrievalConfig, Retriever, VectorIndex

logger = logging.getLogger(__name__)


@dataclass
class PipelineContext:
    """Everything a sample run needs: indexes per chunking strategy, the
    gateway, per-role generation params, and the reranker backends."""

    llm: LlmGateway
    indexes: dict[str, VectorIndex]
    agent_params: LlmParams
    rerank_params: LlmParams | None = None
    cross_encoder: PairScorer | None = None
    judges: tuple[tuple[str, LlmParams], ...] = ()
    query_cap_chars: int = 8000

    def retriever_for(self, config: RetrievalConfig) -> Retriever:
        index = self.indexes.get(config.chunking)
        if index is None:
            raise ConfigError(
                f"no index built for chunking strategy {config.chunking!r}; run ingest first"
            )
        return Retriever(
            index,
            self.llm,
            cross_encoder=self.cross_encoder,
            rerank_params=self.rerank_params,
        )


@dataclass
class PipelineResult:
    sample_id: str
    report: VulnReport
    report_markdown: str
    explorer: ExplorerFindings
    analyst: AnalystFindings
    retrieved_chunk_ids: tuple[str, ...]
    phase_timings: dict[str, float] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()


def run_pipeline(
    payload: CodePayload, config: RetrievalConfig, ctx: PipelineContext
) -> PipelineResult:
    """Retrieve context, run the three agents in order, render the report."""
    timings: dict[str, float] = {}
    warnings: list[str] = []

    t0 = time.monotonic()
    retriever = ctx.retriever_for(config)
    context = rag_retrieval(payload, retriever, config, ctx.query_cap_chars)
    timings["retrieval"] = time.monotonic() - t0
    if not context:
        warnings.append("retrieval returned no context; continuing without it")
        logger.warning("sample %s: empty retrieval context", payload.sample_id)

    t0 = time.monotonic()
    explorer = explore(payload, context, ctx.llm, ctx.agent_params)
    timings["explore"] = time.monotonic() - t0

    t0 = time.monotonic()
    analyst = analyze(payload, explorer, ctx.llm, ctx.agent_params)
    timings["analyze"] = time.monotonic() - t0

    t0 = time.monotonic()
    report = generate_report(payload, explorer, analyst, ctx.llm, ctx.agent_params)
    timings["report"] = time.monotonic() - t0
    warnings.extend(report.warnings)

    return PipelineResult(
        sample_id=payload.sample_id,
        report=report,
        report_markdown=render_markdown(report),
        explorer=explorer,
        analyst=analyst,
        retrieved_chunk_ids=tuple(c.chunk_id for c in context),
        phase_timings=timings,
        warnings=tuple(warnings),
    )
