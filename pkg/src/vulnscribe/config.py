"""Application configuration: defaults, config-file loading, overrides.

The configuration is a plain nested dict (so it dumps as readable JSON) with
typed accessors on :class:`AppConfig` that materialize the domain objects the
modules expect. A JSON config file and command-line flags both override the
defaults; API keys come only from the environment, never from files.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .agents import DEFAULT_QUERY_CAP_CHARS, DEFAULT_SOURCE_EXTENSIONS
from .bm25 import DEFAULT_B, DEFAULT_K1
from .corpus import (
    DEFAULT_CHUNK_SIZE,
    DEFAULT_CONTEXT_CAP,
    DEFAULT_HYPE_QUESTION_CAP,
    DEFAULT_HYPE_QUESTIONS,
    DEFAULT_OVERLAP,
    ChunkingConfig,
)
from .errors import ConfigError
from .gateway import (
    DEFAULT_EMBEDDING_DIM,
    DEFAULT_TEMPERATURE,
    DEFAULT_TOP_P,
    HashingEmbedder,
    HttpChatBackend,
    LlmGateway,
    LlmParams,
    ReplayStore,
)
from .hnsw import DEFAULT_EF_CONSTRUCTION, DEFAULT_EF_SEARCH, DEFAULT_M
from .retrieval import (
    DEFAULT_NUM_CANDIDATES,
    DEFAULT_TOP_K,
    DEFAULT_W_KEYWORD,
    DEFAULT_W_SEMANTIC,
    HybridWeights,
    RetrievalConfig,
)

API_KEY_ENV = "VULNSCRIBE_API_KEY"

MODEL_ROLES = ("explorer", "analyst", "reporter", "judge1", "judge2", "reranker", "context")


def default_config() -> dict:
    """The full parameter surface with its documented defaults."""
    return {
        "paths": {
            "corpus_dir": "corpus",
            "index_dir": "index",
            "replay_dir": "replay",
            "out_dir": "out",
            "bench_root": "bench",
        },
        "gateway": {
            "mode": "replay",
            "base_url": "",
            "api_key_env": API_KEY_ENV,
            "scripted": False,
            "cross_encoder_url": "",
            "max_in_flight": 8,
        },
        "models": {role: "" for role in MODEL_ROLES},
        "generation": {
            "temperature": DEFAULT_TEMPERATURE,
            "top_p": DEFAULT_TOP_P,
            "max_output_tokens": 2048,
        },
        "embedding": {"dim": DEFAULT_EMBEDDING_DIM, "seed": 0},
        "chunking": {
            "chunk_size_chars": DEFAULT_CHUNK_SIZE,
            "overlap_chars": DEFAULT_OVERLAP,
            "context_cap_chars": DEFAULT_CONTEXT_CAP,
            "hype_questions_per_chunk": DEFAULT_HYPE_QUESTIONS,
            "hype_question_cap_chars": DEFAULT_HYPE_QUESTION_CAP,
        },
        "retrieval": {
            "chunking": "flat",
            "retrieval": "embeddings_only",
            "reranker": "none",
            "top_k": DEFAULT_TOP_K,
            "num_candidates": DEFAULT_NUM_CANDIDATES,
            "w_semantic": DEFAULT_W_SEMANTIC,
            "w_keyword": DEFAULT_W_KEYWORD,
        },
        "index": {
            "hnsw_m": DEFAULT_M,
            "hnsw_ef_construction": DEFAULT_EF_CONSTRUCTION,
            "hnsw_ef_search": DEFAULT_EF_SEARCH,
            "hnsw_seed": 42,
            "bm25_k1": DEFAULT_K1,
            "bm25_b": DEFAULT_B,
        },
        "agents": {
            "query_cap_chars": DEFAULT_QUERY_CAP_CHARS,
            "source_extensions": list(DEFAULT_SOURCE_EXTENSIONS),
        },
    }


def _merge(base: dict, override: dict, path: str = "$") -> None:
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path}.{key}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}.{key}: expected an object")
            _merge(base[key], value, f"{path}.{key}")
        else:
            base[key] = value


@dataclass
class AppConfig:
    """Typed facade over the nested configuration dict."""

    data: dict

    @classmethod
    def load(cls, config_file: str | Path | None = None) -> "AppConfig":
        data = default_config()
        if config_file is not None:
            path = Path(config_file)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            try:
                loaded = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as err:
                raise ConfigError(f"config file {path} is not valid JSON: {err}") from err
            if not isinstance(loaded, dict):
                raise ConfigError(f"config file {path} must hold a JSON object")
            _merge(data, loaded)
        return cls(data)

    def set(self, dotted_key: str, value) -> None:
        """Override one leaf, addressed as e.g. ``gateway.mode``."""
        node = self.data
        parts = dotted_key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config key {dotted_key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {dotted_key!r}")
        node[parts[-1]] = value

    def dump(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    def config_hash(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    # -- typed accessors ----------------------------------------------------

    def path(self, name: str) -> Path:
        return Path(self.data["paths"][name])

    def model_id(self, role: str, required: bool = True) -> str:
        if role not in MODEL_ROLES:
            raise ConfigError(f"unknown model role: {role!r}")
        model = self.data["models"][role]
        if required and not model:
            raise ConfigError(f"models.{role} must be set for this command")
        return model

    def llm_params(self, role: str) -> LlmParams:
        gen = self.data["generation"]
        return LlmParams(
            model_id=self.model_id(role),
            temperature=float(gen["temperature"]),
            top_p=float(gen["top_p"]),
            max_output_tokens=int(gen["max_output_tokens"]),
        )

    def chunking_config(self, strategy: str) -> ChunkingConfig:
        c = self.data["chunking"]
        return ChunkingConfig(
            strategy=strategy,
            chunk_size_chars=int(c["chunk_size_chars"]),
            overlap_chars=int(c["overlap_chars"]),
            context_cap_chars=int(c["context_cap_chars"]),
            hype_questions_per_chunk=int(c["hype_questions_per_chunk"]),
            hype_question_cap_chars=int(c["hype_question_cap_chars"]),
        )

    def retrieval_config(
        self,
        chunking: str | None = None,
        retrieval: str | None = None,
        reranker: str | None = None,
        top_k: int | None = None,
        num_candidates: int | None = None,
    ) -> RetrievalConfig:
        r = self.data["retrieval"]
        return RetrievalConfig(
            chunking=chunking or r["chunking"],
            retrieval=retrieval or r["retrieval"],
            reranker=reranker or r["reranker"],
            top_k=top_k if top_k is not None else int(r["top_k"]),
            num_candidates=(
                num_candidates if num_candidates is not None else int(r["num_candidates"])
            ),
            weights=HybridWeights(float(r["w_semantic"]), float(r["w_keyword"])),
        )

    def index_kwargs(self) -> dict:
        i = self.data["index"]
        return {
            "m": int(i["hnsw_m"]),
            "ef_construction": int(i["hnsw_ef_construction"]),
            "ef_search": int(i["hnsw_ef_search"]),
            "seed": int(i["hnsw_seed"]),
            "k1": float(i["bm25_k1"]),
            "b": float(i["bm25_b"]),
        }

    def build_gateway(self) -> LlmGateway:
        g = self.data["gateway"]
        mode = g["mode"]
        backend = None
        if g["scripted"]:
            from .scripted import ScriptedBackend

            backend = ScriptedBackend()
        elif mode in ("record", "live"):
            if not g["base_url"]:
                raise ConfigError(
                    f"{mode} mode needs gateway.base_url or gateway.scripted=true"
                )
            backend = HttpChatBackend(
                g["base_url"], api_key=os.environ.get(g["api_key_env"]) or None
            )
        store = None
        if mode in ("replay", "record"):
            store = ReplayStore(self.path("replay_dir"))
        emb = self.data["embedding"]
        return LlmGateway(
            mode=mode,
            backend=backend,
            replay_store=store,
            embedder=HashingEmbedder(dim=int(emb["dim"]), seed=int(emb["seed"])),
            max_in_flight=int(g["max_in_flight"]),
        )

    def copy(self) -> "AppConfig":
        return AppConfig(copy.deepcopy(self.data))
