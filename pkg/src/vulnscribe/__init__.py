"""RAG-assisted vulnerability analysis, reporting, and evaluation toolkit.

The package covers the full pipeline: knowledge-base chunking and indexing
(flat windows, contextualized windows, hypothetical-question records), hybrid
dense/keyword retrieval over a from-scratch HNSW graph and Okapi BM25 with
optional reranking, a three-agent report workflow rendered to markdown, a
dual-judge rubric evaluation, and a 10-configuration experiment grid with CSV
aggregation. A deterministic record/replay gateway makes every stage
reproducible offline.
"""

from .agents import (
    AnalystFindings,
    CodePayload,
    Evidence,
    ExplorerFindings,
    SourceFile,
    VulnReport,
    analyze,
    explore,
    generate_report,
    ingest_codebase,
    rag_retrieval,
    render_markdown,
)
from .bench import (
    ExperimentRecord,
    GridSummary,
    TestCase,
    aggregate,
    config_slug,
    enumerate_grid,
    export_results,
    load_benchmark,
    run_grid,
)
from .config import AppConfig, default_config
from .corpus import (
    Chunk,
    ChunkingConfig,
    Document,
    TocEntry,
    contextualize_chunks,
    flat_chunk,
    generate_hype_questions,
    load_corpus,
    load_toc,
    split_chapters,
)
from .errors import (
    AgentError,
    AggregationError,
    BenchmarkError,
    ConfigError,
    CorpusParseError,
    GatewayError,
    IngestionError,
    ReplayMissError,
    SchemaError,
    TemplateError,
    ValidationError,
    VulnscribeError,
)
from .gateway import (
    ChatMessage,
    ChatRequest,
    ChatResponse,
    HashingEmbedder,
    HttpChatBackend,
    LlmGateway,
    LlmParams,
    PromptRegistry,
    ReplayStore,
    request_hash,
)
from .hnsw import HnswIndex
from .bm25 import Bm25Index
from .judge import (
    CriterionScore,
    EvaluationSummary,
    GroundTruthAnnotation,
    JudgeVerdict,
    judge_report,
    remediation_success,
    score_overall,
    validate_verdict,
)
from .pipeline import PipelineContext, PipelineResult, run_pipeline
from .retrieval import (
    HybridWeights,
    IndexRecord,
    RankedChunk,
    RetrievalConfig,
    Retriever,
    TokenOverlapScorer,
    VectorIndex,
    build_index,
    fuse_hybrid,
    rerank_cross_encoder,
    rerank_llm_pointwise,
)
from .scripted import ScriptedBackend

__version__ = "0.1.0"

__all__ = [
    "AgentError",
    "AggregationError",
    "AnalystFindings",
    "AppConfig",
    "BenchmarkError",
    "Bm25Index",
    "ChatMessage",
    "ChatRequest",
    "ChatResponse",
    "Chunk",
    "ChunkingConfig",
    "CodePayload",
    "ConfigError",
    "CorpusParseError",
    "CriterionScore",
    "Document",
    "EvaluationSummary",
    "Evidence",
    "ExperimentRecord",
    "ExplorerFindings",
    "GatewayError",
    "GridSummary",
    "GroundTruthAnnotation",
    "HashingEmbedder",
    "HnswIndex",
    "HttpChatBackend",
    "HybridWeights",
    "IndexRecord",
    "IngestionError",
    "JudgeVerdict",
    "LlmGateway",
    "LlmParams",
    "PipelineContext",
    "PipelineResult",
    "PromptRegistry",
    "RankedChunk",
    "ReplayMissError",
    "ReplayStore",
    "RetrievalConfig",
    "Retriever",
    "SchemaError",
    "ScriptedBackend",
    "SourceFile",
    "TemplateError",
    "TestCase",
    "TocEntry",
    "TokenOverlapScorer",
    "ValidationError",
    "VectorIndex",
    "VulnReport",
    "VulnscribeError",
    "aggregate",
    "analyze",
    "build_index",
    "config_slug",
    "contextualize_chunks",
    "default_config",
    "enumerate_grid",
    "explore",
    "export_results",
    "flat_chunk",
    "fuse_hybrid",
    "generate_hype_questions",
    "generate_report",
    "ingest_codebase",
    "judge_report",
    "load_benchmark",
    "load_corpus",
    "load_toc",
    "rag_retrieval",
    "remediation_success",
    "render_markdown",
    "rerank_cross_encoder",
    "rerank_llm_pointwise",
    "request_hash",
    "run_grid",
    "run_pipeline",
    "score_overall",
    "split_chapters",
    "validate_verdict",
]
