"""Vector + keyword retrieval with fusion and reranking.

One VectorIndex holds both the ANN graph (HNSW over unit vectors) and the
BM25 keyword postings, persisted together in a versioned directory. The
three retrieval strategies and both rerankers operate on top of it.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .bm25 import DEFAULT_B, DEFAULT_K1, Bm25Index, tokenize
from .corpus import Chunk
from .errors import ConfigError
from .gateway import ChatRequest, LlmGateway, LlmParams
from .hnsw import DEFAULT_EF_CONSTRUCTION, DEFAULT_EF_SEARCH, DEFAULT_M, HnswIndex

logger = logging.getLogger(__name__)

INDEX_MAGIC = "VSIDX"
INDEX_VERSION = 1

DEFAULT_TOP_K = 10
DEFAULT_NUM_CANDIDATES = 2
DEFAULT_W_SEMANTIC = 0.6
DEFAULT_W_KEYWORD = 0.4

CHUNKING_STRATEGIES = ("flat", "contextual", "hype")
RETRIEVAL_STRATEGIES = ("embeddings_only", "hybrid", "hype")
RERANKERS = ("cross_encoder", "llm", "none")


@dataclass(frozen=True)
class HybridWeights:
    w_semantic: float = DEFAULT_W_SEMANTIC
    w_keyword: float = DEFAULT_W_KEYWORD

    def __post_init__(self) -> None:
        if self.w_semantic < 0 or self.w_keyword < 0:
            raise ConfigError("hybrid weights must be non-negative")
        if abs(self.w_semantic + self.w_keyword - 1.0) > 1e-9:
            raise ConfigError("hybrid weights must sum to 1")


@dataclass(frozen=True)
class RetrievalConfig:
    chunking: str = "flat"
    retrieval: str = "embeddings_only"
    reranker: str = "none"
    top_k: int = DEFAULT_TOP_K
    num_candidates: int = DEFAULT_NUM_CANDIDATES
    weights: HybridWeights = field(default_factory=HybridWeights)

    def __post_init__(self) -> None:
        if self.chunking not in CHUNKING_STRATEGIES:
            raise ConfigError(f"unknown chunking strategy: {self.chunking!r}")
        if self.retrieval not in RETRIEVAL_STRATEGIES:
            raise ConfigError(f"unknown retrieval strategy: {self.retrieval!r}")
        if self.reranker not in RERANKERS:
            raise ConfigError(f"unknown reranker: {self.reranker!r}")
        if (self.retrieval == "hype") != (self.chunking == "hype"):
            raise ConfigError("hype retrieval and hype chunking imply each other")
        if self.top_k < 1 or self.num_candidates < 1:
            raise ConfigError("top_k and num_candidates must be >= 1")

    def label(self) -> str:
        return f"{self.chunking}/{self.retrieval}/{self.reranker}"


@dataclass(frozen=True)
class IndexRecord:
    record_id: str
    chunk_id: str
    vector: np.ndarray
    text_for_keyword: str
    payload_kind: str  # chunk_text | hype_question

    def __post_init__(self) -> None:
        if self.payload_kind not in ("chunk_text", "hype_question"):
            raise ConfigError(f"unknown payload_kind: {self.payload_kind!r}")


@dataclass(frozen=True)
class RankedChunk:
    chunk_id: str
    raw_text: str
    score_semantic: float
    score_keyword: float
    score_final: float
    rank: int
    rerank_score: float | None = None


def cosine_to_unit(cos: float) -> float:
    """Map cosine similarity [-1, 1] into [0, 1]."""
    return (1.0 + cos) / 2.0


def minmax_normalize(scores: Sequence[float]) -> list[float]:
    """Min-max normalize within a candidate pool; degenerate pools map to 1.0."""
    if not scores:
        return []
    lo, hi = min(scores), max(scores)
    if hi - lo < 1e-12:
        return [1.0] * len(scores)
    return [(s - lo) / (hi - lo) for s in scores]


class VectorIndex:
    """HNSW-backed ANN index plus BM25 postings, persisted as one directory."""

    def __init__(
        self,
        dim: int,
        strategy: str = "flat",
        m: int = DEFAULT_M,
        ef_construction: int = DEFAULT_EF_CONSTRUCTION,
        ef_search: int = DEFAULT_EF_SEARCH,
        k1: float = DEFAULT_K1,
        b: float = DEFAULT_B,
        seed: int = 42,
    ) -> None:
        if strategy not in CHUNKING_STRATEGIES:
            raise ConfigError(f"unknown chunking strategy: {strategy!r}")
        self.dim = dim
        self.strategy = strategy
        self.hnsw = HnswIndex(dim, m=m, ef_construction=ef_construction, ef_search=ef_search, seed=seed)
        self.bm25 = Bm25Index(k1=k1, b=b)
        self._records: dict[str, dict] = {}  # record_id -> metadata
        self._node_of: dict[str, int] = {}
        self._record_of: dict[int, str] = {}
        self._tombstones: set[int] = set()
        self.chunk_raw_text: dict[str, str] = {}
        self.chunk_index_text: dict[str, str] = {}

    def __len__(self) -> int:
        return len(self._records)

    @property
    def ef_search(self) -> int:
        return self.hnsw.ef_search

    def record(self, record_id: str) -> dict:
        return self._records[record_id]

    def upsert(self, records: Sequence[IndexRecord]) -> int:
        """Insert or replace records by record_id; returns the processed count."""
        for rec in records:
            if rec.vector.shape != (self.dim,):
                raise ConfigError(
                    f"record {rec.record_id}: vector dim {rec.vector.shape} != ({self.dim},)"
                )
            vec = np.asarray(rec.vector, dtype=np.float32)
            norm = float(np.linalg.norm(vec))
            if norm > 0:
                vec = vec / norm
            existing = self._node_of.get(rec.record_id)
            if existing is not None:
                if np.allclose(self.hnsw.vector(existing), vec, atol=1e-7):
                    self._records[rec.record_id] = self._record_meta(rec)
                    self.bm25.add(rec.record_id, rec.text_for_keyword)
                    continue
                self._tombstones.add(existing)
                del self._record_of[existing]
            node = self.hnsw.add(vec)
            self._node_of[rec.record_id] = node
            self._record_of[node] = rec.record_id
            self._records[rec.record_id] = self._record_meta(rec)
            self.bm25.add(rec.record_id, rec.text_for_keyword)
        return len(records)

    @staticmethod
    def _record_meta(rec: IndexRecord) -> dict:
        return {
            "record_id": rec.record_id,
            "chunk_id": rec.chunk_id,
            "text_for_keyword": rec.text_for_keyword,
            "payload_kind": rec.payload_kind,
        }

    def _prepare_query(self, query_vector: np.ndarray) -> np.ndarray:
        q = np.asarray(query_vector, dtype=np.float32)
        if q.shape != (self.dim,):
            raise ConfigError(f"query dim {q.shape} != ({self.dim},)")
        norm = float(np.linalg.norm(q))
        return q / norm if norm > 0 else q

    def ann_search(self, query_vector: np.ndarray, k: int, ef: int | None = None) -> list[tuple[str, float]]:
        """Approximate top-k (record_id, cosine_similarity), descending."""
        if not self._records or k < 1:
            return []
        q = self._prepare_query(query_vector)
        fetch = k + len(self._tombstones)
        raw = self.hnsw.search(q, fetch, ef=ef)
        hits = [
            (self._record_of[node], float(sim))
            for node, sim in raw
            if node not in self._tombstones
        ]
        hits.sort(key=lambda h: (-h[1], h[0]))
        return hits[:k]

    def exact_search(self, query_vector: np.ndarray, k: int) -> list[tuple[str, float]]:
        """Brute-force top-k oracle with the same output contract as ann_search."""
        if not self._records or k < 1:
            return []
        q = self._prepare_query(query_vector)
        sims = self.hnsw.vectors_array() @ q
        hits = [
            (record_id, float(sims[node]))
            for node, record_id in self._record_of.items()
        ]
        hits.sort(key=lambda h: (-h[1], h[0]))
        return hits[:k]

    def bm25_search(self, query: str, k: int) -> list[tuple[str, float]]:
        return self.bm25.search(query, k)

    # -- persistence -------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {
            "magic": INDEX_MAGIC,
            "version": INDEX_VERSION,
            "dim": self.dim,
            "strategy": self.strategy,
            "record_count": len(self._records),
            "hnsw": {
                "m": self.hnsw.m,
                "ef_construction": self.hnsw.ef_construction,
                "ef_search": self.hnsw.ef_search,
                "seed": self.hnsw.seed,
            },
            "bm25": {"k1": self.bm25.k1, "b": self.bm25.b},
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        np.save(directory / "vectors.npy", self.hnsw.vectors_array())
        graph_state = self.hnsw.state()
        graph_state.pop("dim", None)
        (directory / "graph.json").write_text(json.dumps(graph_state))
        (directory / "postings.json").write_text(json.dumps(self.bm25.state()))
        records_blob = {
            "records": self._records,
            "node_of": self._node_of,
            "tombstones": sorted(self._tombstones),
            "chunk_raw_text": self.chunk_raw_text,
            "chunk_index_text": self.chunk_index_text,
        }
        (directory / "records.json").write_text(json.dumps(records_blob))

    @classmethod
    def load(cls, directory: str | Path) -> "VectorIndex":
        directory = Path(directory)
        manifest_path = directory / "manifest.json"
        if not manifest_path.exists():
            raise ConfigError(f"no index manifest at {directory}; run ingest first")
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("magic") != INDEX_MAGIC:
            raise ConfigError(f"{manifest_path}: not a recognized index directory")
        if manifest.get("version") != INDEX_VERSION:
            raise ConfigError(f"{manifest_path}: unsupported index version {manifest.get('version')}")
        index = cls(
            dim=manifest["dim"],
            strategy=manifest["strategy"],
            m=manifest["hnsw"]["m"],
            ef_construction=manifest["hnsw"]["ef_construction"],
            ef_search=manifest["hnsw"]["ef_search"],
            k1=manifest["bm25"]["k1"],
            b=manifest["bm25"]["b"],
            seed=manifest["hnsw"]["seed"],
        )
        vectors = np.load(directory / "vectors.npy")
        graph_state = json.loads((directory / "graph.json").read_text())
        graph_state["dim"] = manifest["dim"]
        index.hnsw = HnswIndex.from_state(graph_state, vectors)
        index.bm25 = Bm25Index.from_state(json.loads((directory / "postings.json").read_text()))
        blob = json.loads((directory / "records.json").read_text())
        index._records = blob["records"]
        index._node_of = {k: int(v) for k, v in blob["node_of"].items()}
        index._record_of = {v: k for k, v in index._node_of.items()}
        index._tombstones = set(blob["tombstones"])
        index.chunk_raw_text = blob["chunk_raw_text"]
        index.chunk_index_text = blob["chunk_index_text"]
        return index


def build_records(chunks: Sequence[Chunk], strategy: str, embed) -> tuple[list[IndexRecord], dict[str, str], dict[str, str]]:
    """Turn chunks into index records for one chunking strategy.

    flat / contextual embed each chunk's index_text as one record; hype emits
    one record per hypothetical question, all pointing at the parent chunk.
    Returns (records, chunk_raw_text map, chunk_index_text map).
    """
    raw_map: dict[str, str] = {}
    index_map: dict[str, str] = {}
    records: list[IndexRecord] = []
    if strategy in ("flat", "contextual"):
        texts = [c.index_text for c in chunks]
        vectors = embed(texts) if texts else []
        for chunk, vec in zip(chunks, vectors):
            raw_map[chunk.chunk_id] = chunk.raw_text
            index_map[chunk.chunk_id] = chunk.index_text
            records.append(
                IndexRecord(chunk.chunk_id, chunk.chunk_id, vec, chunk.index_text, "chunk_text")
            )
    elif strategy == "hype":
        for chunk in chunks:
            if not chunk.hype_questions:
                logger.warning("chunk %s has no questions; excluded from hype index", chunk.chunk_id)
                continue
            raw_map[chunk.chunk_id] = chunk.raw_text
            index_map[chunk.chunk_id] = chunk.index_text
            vectors = embed(list(chunk.hype_questions))
            for i, (question, vec) in enumerate(zip(chunk.hype_questions, vectors)):
                records.append(
                    IndexRecord(f"{chunk.chunk_id}::q{i}", chunk.chunk_id, vec, question, "hype_question")
                )
    else:
        raise ConfigError(f"unknown strategy: {strategy!r}")
    return records, raw_map, index_map


def build_index(chunks: Sequence[Chunk], strategy: str, embed, dim: int, **index_kwargs) -> VectorIndex:
    records, raw_map, index_map = build_records(chunks, strategy, embed)
    index = VectorIndex(dim=dim, strategy=strategy, **index_kwargs)
    index.upsert(records)
    index.chunk_raw_text.update(raw_map)
    index.chunk_index_text.update(index_map)
    return index


def _assign_ranks(hits: list[RankedChunk]) -> list[RankedChunk]:
    return [replace(h, rank=i + 1) for i, h in enumerate(hits)]


def fuse_hybrid(
    sem: Sequence[tuple[str, float]],
    kw: Sequence[tuple[str, float]],
    weights: HybridWeights,
    texts: dict[str, str] | None = None,
) -> list[RankedChunk]:
    """Weighted-sum fusion of normalized semantic and keyword scores.

    Inputs are (chunk_id, score) with scores already normalized into [0, 1];
    a candidate missing from one side contributes 0 there. Output is sorted
    by fused score descending, ties broken by chunk_id ascending.
    """
    texts = texts or {}
    sem_map = dict(sem)
    kw_map = dict(kw)
    if len(sem_map) != len(sem) or len(kw_map) != len(kw):
        raise ConfigError("duplicate chunk_id in a fusion input")
    fused: list[RankedChunk] = []
    for chunk_id in sorted(sem_map.keys() | kw_map.keys()):
        s = sem_map.get(chunk_id, 0.0)
        k = kw_map.get(chunk_id, 0.0)
        fused.append(
            RankedChunk(
                chunk_id=chunk_id,
                raw_text=texts.get(chunk_id, ""),
                score_semantic=s,
                score_keyword=k,
                score_final=weights.w_semantic * s + weights.w_keyword * k,
                rank=0,
            )
        )
    fused.sort(key=lambda c: (-c.score_final, c.chunk_id))
    return _assign_ranks(fused)


class PairScorer(Protocol):
    def score(self, query: str, document: str) -> float: ...


class TokenOverlapScorer:
    """Deterministic offline stand-in for a cross-encoder: token Jaccard."""

    def score(self, query: str, document: str) -> float:
        q = set(tokenize(query))
        d = set(tokenize(document))
        if not q or not d:
            return 0.0
        return len(q & d) / len(q | d)


class RemoteCrossEncoderScorer:
    """Client for a remote pairwise scoring service (POST {query, document})."""

    def __init__(self, base_url: str, api_key: str | None = None, timeout_s: float = 30.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout_s = timeout_s

    def score(self, query: str, document: str) -> float:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.post(
            f"{self.base_url}/score",
            json={"query": query, "document": document},
            headers=headers,
            timeout=self.timeout_s,
        )
        resp.raise_for_status()
        return float(resp.json()["score"])


def rerank_cross_encoder(
    query: str,
    candidates: Sequence[RankedChunk],
    scorer: PairScorer,
    index_texts: dict[str, str] | None = None,
    score_raw_text: bool = False,
) -> list[RankedChunk]:
    """Pointwise pairwise-scorer rerank; candidate set is never altered.

    By default the scorer sees the indexed text (context prefix included);
    score_raw_text=True scores the bare chunk text instead.
    """
    index_texts = index_texts or {}
    rescored: list[RankedChunk] = []
    for cand in candidates:
        text = cand.raw_text if score_raw_text else index_texts.get(cand.chunk_id, cand.raw_text)
        try:
            s = float(scorer.score(query, text))
        except Exception as err:  # noqa: BLE001 - per-pair fallback
            logger.warning("cross-encoder failed on %s; using retrieval score: %s", cand.chunk_id, err)
            s = cand.score_final
        rescored.append(replace(cand, rerank_score=s))
    rescored.sort(key=lambda c: (-(c.rerank_score or 0.0), c.chunk_id))
    return _assign_ranks(rescored)


_INT_RE = re.compile(r"-?\d+")


def rerank_llm_pointwise(
    query: str,
    candidates: Sequence[RankedChunk],
    llm: LlmGateway,
    params: LlmParams,
    index_texts: dict[str, str] | None = None,
) -> list[RankedChunk]:
    """LLM scores each candidate 0-10; unparsable replies fall back to the
    retrieval score scaled onto [0, 10]."""
    index_texts = index_texts or {}
    rescored: list[RankedChunk] = []
    for cand in candidates:
        document = index_texts.get(cand.chunk_id, cand.raw_text)
        prompt = llm.render_prompt("rerank_pointwise", {"query": query, "document": document})
        try:
            reply = llm.chat(ChatRequest.build(params, user=prompt)).content
        except Exception as err:  # noqa: BLE001 - per-pair fallback
            logger.warning("llm rerank failed on %s; using retrieval score: %s", cand.chunk_id, err)
            reply = ""
        match = _INT_RE.search(reply)
        if match:
            score = float(min(10, max(0, int(match.group()))))
        else:
            score = cand.score_final * 10.0
            logger.warning("unparsable rerank reply for %s: %r", cand.chunk_id, reply[:80])
        rescored.append(replace(cand, rerank_score=score))
    rescored.sort(key=lambda c: (-(c.rerank_score or 0.0), -c.score_final, c.chunk_id))
    return _assign_ranks(rescored)


class Retriever:
    """Binds an index set, the embedding gateway, and reranker backends."""

    def __init__(
        self,
        index: VectorIndex,
        llm: LlmGateway,
        cross_encoder: PairScorer | None = None,
        rerank_params: LlmParams | None = None,
        score_raw_text: bool = False,
    ) -> None:
        self.index = index
        self.llm = llm
        self.cross_encoder = cross_encoder or TokenOverlapScorer()
        self.rerank_params = rerank_params
        self.score_raw_text = score_raw_text

    def _semantic_pool(self, query_text: str, n: int) -> list[tuple[str, float]]:
        qv = self.llm.embed([query_text])[0]
        return self.index.ann_search(qv, n)

    def _chunk_hits_from_records(self, hits: list[tuple[str, float]]) -> list[tuple[str, float]]:
        """Collapse record-level hits onto parent chunks by max score."""
        best: dict[str, float] = {}
        for record_id, sim in hits:
            chunk_id = self.index.record(record_id)["chunk_id"]
            if chunk_id not in best or sim > best[chunk_id]:
                best[chunk_id] = sim
        return sorted(best.items(), key=lambda h: (-h[1], h[0]))

    def retrieve(self, config: RetrievalConfig, query_text: str) -> list[RankedChunk]:
        if config.chunking != self.index.strategy:
            raise ConfigError(
                f"index built for {self.index.strategy!r} cannot serve {config.chunking!r} retrieval"
            )
        if len(self.index) == 0:
            logger.warning("retrieval over an empty index returns no results")
            return []
        fetch_n = config.top_k * config.num_candidates
        texts = self.index.chunk_raw_text

        if config.retrieval == "embeddings_only":
            hits = self._chunk_hits_from_records(self._semantic_pool(query_text, fetch_n))[:fetch_n]
            candidates = [
                RankedChunk(
                    chunk_id=cid,
                    raw_text=texts.get(cid, ""),
                    score_semantic=cosine_to_unit(sim),
                    score_keyword=0.0,
                    score_final=cosine_to_unit(sim),
                    rank=0,
                )
                for cid, sim in hits
            ]
            candidates.sort(key=lambda c: (-c.score_final, c.chunk_id))
            candidates = _assign_ranks(candidates)
        elif config.retrieval == "hybrid":
            sem_hits = self._chunk_hits_from_records(self._semantic_pool(query_text, fetch_n))
            sem = [(cid, cosine_to_unit(sim)) for cid, sim in sem_hits]
            kw_raw = self.index.bm25_search(query_text, fetch_n)
            kw_scores = minmax_normalize([s for _, s in kw_raw])
            kw = [(rid, s) for (rid, _), s in zip(kw_raw, kw_scores)]
            candidates = fuse_hybrid(sem, kw, config.weights, texts)[:fetch_n]
            candidates = _assign_ranks(candidates)
        else:  # hype: query-to-question matching, collapsed onto parent chunks
            # over-fetch question records since several may share one chunk
            record_hits = self._semantic_pool(query_text, fetch_n * 4)
            chunk_hits = self._chunk_hits_from_records(record_hits)[:fetch_n]
            candidates = [
                RankedChunk(
                    chunk_id=cid,
                    raw_text=texts.get(cid, ""),
                    score_semantic=cosine_to_unit(sim),
                    score_keyword=0.0,
                    score_final=cosine_to_unit(sim),
                    rank=0,
                )
                for cid, sim in chunk_hits
            ]
            candidates.sort(key=lambda c: (-c.score_final, c.chunk_id))
            candidates = _assign_ranks(candidates)

        if config.reranker == "cross_encoder":
            candidates = rerank_cross_encoder(
                query_text,
                candidates,
                self.cross_encoder,
                index_texts=self.index.chunk_index_text,
                score_raw_text=self.score_raw_text,
            )
        elif config.reranker == "llm":
            if self.rerank_params is None:
                raise ConfigError("llm reranker requires rerank_params (model id)")
            candidates = rerank_llm_pointwise(
                query_text,
                candidates,
                self.llm,
                self.rerank_params,
                index_texts=self.index.chunk_index_text,
            )
        return _assign_ranks(candidates[: config.top_k])
