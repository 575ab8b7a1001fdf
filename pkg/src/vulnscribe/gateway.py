"""Provider-agnostic chat + embedding gateway with deterministic record/replay.

The gateway is the single choke point for every LLM-backed component:
chunk contextualization, hypothetical-question generation, the pointwise
reranker, the three report agents, and both judges.  Running it in replay
mode makes the whole pipeline bit-deterministic.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from string import Template
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import ConfigError, GatewayError, ReplayMissError, TemplateError

logger = logging.getLogger(__name__)

_VALID_ROLES = ("system", "user", "assistant")

DEFAULT_TEMPERATURE = 0.6
DEFAULT_TOP_P = 0.95
DEFAULT_EMBEDDING_DIM = 384


@dataclass(frozen=True)
class LlmParams:
    """Generation parameters attached to every chat request."""

    model_id: str
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    max_output_tokens: int = 2048

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ConfigError("model_id must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError(f"temperature out of range [0, 2]: {self.temperature}")
        if not 0.0 < self.top_p <= 1.0:
            raise ConfigError(f"top_p out of range (0, 1]: {self.top_p}")
        if self.max_output_tokens <= 0:
            raise ConfigError("max_output_tokens must be positive")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in _VALID_ROLES:
            raise ConfigError(f"invalid message role: {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[ChatMessage, ...]
    params: LlmParams

    def __post_init__(self) -> None:
        if not self.messages:
            raise ConfigError("chat request needs at least one message")

    @staticmethod
    def build(params: LlmParams, *, system: str | None = None, user: str) -> "ChatRequest":
        msgs: list[ChatMessage] = []
        if system:
            msgs.append(ChatMessage("system", system))
        msgs.append(ChatMessage("user", user))
        return ChatRequest(tuple(msgs), params)


@dataclass(frozen=True)
class ChatResponse:
    content: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_s: float = 0.0


def request_hash(req: ChatRequest) -> str:
    """Canonical sha256 key for a request.

    Serialization is key-sorted compact JSON, so the key depends only on the
    message sequence and the generation parameters, never on formatting.
    """
    payload = {
        "messages": [{"role": m.role, "content": m.content} for m in req.messages],
        "params": {
            "model_id": req.params.model_id,
            "temperature": req.params.temperature,
            "top_p": req.params.top_p,
            "max_output_tokens": req.params.max_output_tokens,
        },
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ChatBackend(Protocol):
    def complete(self, req: ChatRequest) -> ChatResponse: ...


class HttpChatBackend:
    """Client for a chat-completions-style HTTP endpoint.

    Retries transient failures 3 times with exponential backoff and jitter.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        timeout_s: float = 120.0,
        max_attempts: int = 3,
        backoff_base_s: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout_s = timeout_s
        self.max_attempts = max_attempts
        self.backoff_base_s = backoff_base_s
        self._sleep = sleep
        self._rng = random.Random(0xC0FFEE)

    def complete(self, req: ChatRequest) -> ChatResponse:
        import requests

        body = {
            "model": req.params.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.params.temperature,
            "top_p": req.params.top_p,
            "max_tokens": req.params.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_err: Exception | None = None
        for attempt in range(self.max_attempts):
            start = time.monotonic()
            try:
                resp = requests.post(
                    f"{self.base_url}/chat/completions",
                    json=body,
                    headers=headers,
                    timeout=self.timeout_s,
                )
                resp.raise_for_status()
                data = resp.json()
                usage = data.get("usage", {})
                return ChatResponse(
                    content=data["choices"][0]["message"]["content"],
                    prompt_tokens=int(usage.get("prompt_tokens", 0)),
                    completion_tokens=int(usage.get("completion_tokens", 0)),
                    latency_s=time.monotonic() - start,
                )
            except Exception as err:  # noqa: BLE001 - retry any transport failure
                last_err = err
                if attempt + 1 < self.max_attempts:
                    delay = self.backoff_base_s * (2**attempt) * (1 + self._rng.random())
                    logger.warning("chat attempt %d failed (%s); retrying in %.1fs", attempt + 1, err, delay)
                    self._sleep(delay)
        raise GatewayError(f"chat failed after {self.max_attempts} attempts: {last_err}")


class ReplayStore:
    """One human-readable JSON file per recorded interaction, keyed by hash."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)

    def path_for(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> ChatResponse | None:
        path = self.path_for(key)
        if not path.exists():
            return None
        data = json.loads(path.read_text(encoding="utf-8"))
        r = data["response"]
        return ChatResponse(
            content=r["content"],
            prompt_tokens=r.get("prompt_tokens", 0),
            completion_tokens=r.get("completion_tokens", 0),
            latency_s=0.0,
        )

    def put(self, key: str, req: ChatRequest, resp: ChatResponse) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        data = {
            "request": {
                "model_id": req.params.model_id,
                "temperature": req.params.temperature,
                "top_p": req.params.top_p,
                "max_output_tokens": req.params.max_output_tokens,
                "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            },
            "response": {
                "content": resp.content,
                "prompt_tokens": resp.prompt_tokens,
                "completion_tokens": resp.completion_tokens,
            },
        }
        self.path_for(key).write_text(
            json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )


_TOKEN_RE = re.compile(r"[a-z0-9]+")


class HashingEmbedder:
    """Seeded feature-hashing text embedder, L2-normalized.

    Offline stand-in for a sentence embedding model: tokens (and bigrams)
    are hashed into a fixed number of buckets with a deterministic sign, so
    texts sharing vocabulary land near each other in cosine space.  Fully
    deterministic across processes for a given (dim, seed).
    """

    def __init__(self, dim: int = DEFAULT_EMBEDDING_DIM, seed: int = 0, model_id: str = "hashing-embedder") -> None:
        if dim <= 0:
            raise ConfigError("embedding dimension must be positive")
        self.dim = dim
        self.seed = seed
        self.model_id = model_id

    def _slot(self, token: str) -> tuple[int, float]:
        digest = hashlib.md5(f"{self.seed}:{token}".encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:4], "little") % self.dim
        sign = 1.0 if digest[4] % 2 == 0 else -1.0
        return bucket, sign

    def embed_one(self, text: str) -> np.ndarray:
        if not text:
            raise ConfigError("cannot embed an empty text")
        tokens = _TOKEN_RE.findall(text.lower())
        vec = np.zeros(self.dim, dtype=np.float64)
        for tok in tokens:
            bucket, sign = self._slot(tok)
            vec[bucket] += sign
        for a, b in zip(tokens, tokens[1:]):
            bucket, sign = self._slot(f"{a}_{b}")
            vec[bucket] += 0.5 * sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            # no alphanumeric content: fall back to hashing the raw text
            bucket, sign = self._slot(repr(text))
            vec[bucket] = sign
            norm = 1.0
        return vec / norm

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ConfigError("embed() needs a non-empty batch")
        return [self.embed_one(t) for t in texts]


_PLACEHOLDER_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}|\$([A-Za-z_][A-Za-z0-9_]*)")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    template: str
    required_placeholders: frozenset[str]

    def render(self, bindings: dict[str, str]) -> str:
        missing = self.required_placeholders - bindings.keys()
        if missing:
            raise TemplateError(
                f"template {self.name!r} missing bindings: {sorted(missing)}"
            )
        return Template(self.template).substitute(bindings)


class PromptRegistry:
    """Directory of ``*.txt`` template files, named by file stem.

    Placeholders use ``$name`` / ``${name}`` syntax so literal braces in
    embedded JSON examples survive untouched.
    """

    def __init__(self, directory: str | Path | None = None) -> None:
        if directory is None:
            directory = Path(__file__).parent / "prompts"
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise ConfigError(f"prompt directory not found: {self.directory}")
        self._cache: dict[str, PromptTemplate] = {}

    def names(self) -> list[str]:
        return sorted(p.stem for p in self.directory.glob("*.txt"))

    def get(self, name: str) -> PromptTemplate:
        if name not in self._cache:
            path = self.directory / f"{name}.txt"
            if not path.exists():
                raise TemplateError(f"unknown prompt template: {name!r}")
            text = path.read_text(encoding="utf-8")
            placeholders = frozenset(
                a or b for a, b in _PLACEHOLDER_RE.findall(text)
            )
            self._cache[name] = PromptTemplate(name, text, placeholders)
        return self._cache[name]

    def render(self, name: str, bindings: dict[str, str]) -> str:
        return self.get(name).render(bindings)


@dataclass
class LlmGateway:
    """Chat + embeddings + prompt rendering behind one object.

    mode:
      * ``replay``  - every chat must hit the replay store; a miss is an error.
      * ``record``  - live backend answers; the interaction is persisted.
      * ``live``    - live backend, nothing persisted.
    """

    mode: str = "replay"
    backend: ChatBackend | None = None
    replay_store: ReplayStore | None = None
    embedder: HashingEmbedder = field(default_factory=HashingEmbedder)
    prompts: PromptRegistry = field(default_factory=PromptRegistry)
    max_in_flight: int = 8

    def __post_init__(self) -> None:
        if self.mode not in ("replay", "record", "live"):
            raise ConfigError(f"unknown gateway mode: {self.mode!r}")
        if self.mode == "replay" and self.replay_store is None:
            raise ConfigError("replay mode requires a replay store")
        if self.mode in ("record", "live") and self.backend is None:
            raise ConfigError(f"{self.mode} mode requires a live backend")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        # bounds concurrent live calls; recording stays single-writer
        self._live_slots = threading.BoundedSemaphore(self.max_in_flight)
        self._record_lock = threading.Lock()

    def chat(self, req: ChatRequest) -> ChatResponse:
        key = request_hash(req)
        if self.mode == "replay":
            assert self.replay_store is not None
            resp = self.replay_store.get(key)
            if resp is None:
                raise ReplayMissError(
                    f"unrecorded interaction {key} (model {req.params.model_id})"
                )
            return resp
        assert self.backend is not None
        with self._live_slots:
            resp = self.backend.complete(req)
        if self.mode == "record" and self.replay_store is not None:
            with self._record_lock:
                self.replay_store.put(key, req, resp)
        return resp

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        return self.embedder.embed(texts)

    def render_prompt(self, name: str, bindings: dict[str, str]) -> str:
        return self.prompts.render(name, bindings)
