"""Knowledge-base loading and chunking.

A corpus is a directory of cleaned markdown files, optionally carrying a
front-matter metadata header and embedded-content blocks delimited by
``<START OF CONTENT FOR [URL]>`` / ``<END OF CONTENT FOR [URL]>`` tags.
Chunking supports three strategies: flat sliding windows, LLM-contextualized
windows, and hypothetical-question representations.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError, CorpusParseError, ValidationError
from .gateway import ChatRequest, LlmGateway, LlmParams

logger = logging.getLogger(__name__)

SOURCE_KINDS = ("project_zero_report", "cwe_chapter", "other")

DEFAULT_CHUNK_SIZE = 2000
DEFAULT_OVERLAP = 200
DEFAULT_CONTEXT_CAP = 200
DEFAULT_HYPE_QUESTIONS = 3
DEFAULT_HYPE_QUESTION_CAP = 200

_START_TAG_RE = re.compile(r"<START OF CONTENT FOR \[(?P<url>[^\]]*)\]>")
_END_TAG_RE = re.compile(r"<END OF CONTENT FOR \[(?P<url>[^\]]*)\]>")
_TAG_RE = re.compile(
    r"<(?P<kind>START|END) OF CONTENT FOR \[(?P<url>[^\]]*)\]>"
)


@dataclass(frozen=True)
class Document:
    """One knowledge-base markdown unit."""

    id: str
    source_kind: str
    title: str
    body: str
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("Document.id must be non-empty")
        if self.source_kind not in SOURCE_KINDS:
            raise ValidationError(f"unknown source_kind: {self.source_kind!r}")
        if not self.body:
            raise ValidationError(f"Document {self.id!r} has an empty body")


@dataclass(frozen=True)
class TocEntry:
    chapter_name: str
    start_page: int
    end_page: int

    def __post_init__(self) -> None:
        if self.start_page < 1 or self.end_page < 1:
            raise ValidationError(f"TOC pages must be positive: {self}")
        if self.start_page > self.end_page:
            raise ValidationError(
                f"TOC entry {self.chapter_name!r}: start_page > end_page"
            )


@dataclass(frozen=True)
class ChunkingConfig:
    strategy: str = "flat"
    chunk_size_chars: int = DEFAULT_CHUNK_SIZE
    overlap_chars: int = DEFAULT_OVERLAP
    context_cap_chars: int = DEFAULT_CONTEXT_CAP
    hype_questions_per_chunk: int = DEFAULT_HYPE_QUESTIONS
    hype_question_cap_chars: int = DEFAULT_HYPE_QUESTION_CAP

    def __post_init__(self) -> None:
        if self.strategy not in ("flat", "contextual", "hype"):
            raise ConfigError(f"unknown chunking strategy: {self.strategy!r}")
        if self.chunk_size_chars <= 0:
            raise ConfigError("chunk_size_chars must be positive")
        if self.overlap_chars < 0:
            raise ConfigError("overlap_chars must be non-negative")
        if self.overlap_chars >= self.chunk_size_chars:
            raise ConfigError("overlap_chars must be smaller than chunk_size_chars")
        if min(self.context_cap_chars, self.hype_questions_per_chunk, self.hype_question_cap_chars) <= 0:
            raise ConfigError("all caps must be positive")


@dataclass(frozen=True)
class Chunk:
    """One indexed fragment of a Document.

    ``index_text`` is what actually gets embedded: the raw window for flat
    chunking, context prefix + blank line + window for contextual chunking.
    HyPE chunks keep ``index_text`` equal to the raw window; their questions
    are embedded as separate records pointing back to ``chunk_id``.
    """

    chunk_id: str
    doc_id: str
    char_start: int
    char_end: int
    raw_text: str
    index_text: str
    context_prefix: str | None = None
    hype_questions: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.char_end - self.char_start != len(self.raw_text):
            raise ValidationError(f"chunk {self.chunk_id}: offsets disagree with raw_text length")


def validate_embedded_tags(body: str, *, where: str = "<memory>") -> None:
    """Check START/END embedded-content tags are well nested with matching URLs."""
    stack: list[str] = []
    for match in _TAG_RE.finditer(body):
        kind, url = match.group("kind"), match.group("url")
        if kind == "START":
            stack.append(url)
        else:
            if not stack:
                raise CorpusParseError(
                    f"{where}: END tag for [{url}] without a matching START"
                )
            open_url = stack.pop()
            if open_url != url:
                raise CorpusParseError(
                    f"{where}: END tag for [{url}] closes START tag for [{open_url}]"
                )
    if stack:
        raise CorpusParseError(
            f"{where}: unmatched START tag for [{stack[-1]}]"
        )


_FRONT_MATTER_RE = re.compile(r"\A---\n(?P<header>.*?)\n---\n", re.DOTALL)
_HEADING_RE = re.compile(r"^#{1,6}\s+(?P<title>.+)$", re.MULTILINE)


def _parse_front_matter(text: str) -> tuple[dict[str, str], str]:
    match = _FRONT_MATTER_RE.match(text)
    if not match:
        return {}, text
    metadata: dict[str, str] = {}
    for line in match.group("header").splitlines():
        line = line.strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise CorpusParseError(f"malformed front-matter line: {line!r}")
        metadata[key.strip()] = value.strip()
    return metadata, text[match.end():]


def _infer_source_kind(metadata: dict[str, str]) -> str:
    kind = metadata.get("source_kind", "other")
    return kind if kind in SOURCE_KINDS else "other"


def load_corpus(root: str | Path) -> list[Document]:
    """Load every ``.md`` file under ``root`` as one Document, sorted by path."""
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"corpus root does not exist: {root}")
    paths = sorted(root.rglob("*.md"))
    if not paths:
        raise ConfigError(f"corpus root contains no markdown files: {root}")
    documents: list[Document] = []
    for path in paths:
        text = path.read_text(encoding="utf-8")
        metadata, body = _parse_front_matter(text)
        body = body.strip("\n") + "\n" if body.strip() else body
        if not body.strip():
            raise CorpusParseError(f"{path}: document body is empty")
        validate_embedded_tags(body, where=str(path))
        heading = _HEADING_RE.search(body)
        title = metadata.get("title") or (heading.group("title").strip() if heading else path.stem)
        doc_id = path.relative_to(root).with_suffix("").as_posix()
        documents.append(
            Document(
                id=doc_id,
                source_kind=_infer_source_kind(metadata),
                title=title,
                body=body,
                metadata=metadata,
            )
        )
    seen: set[str] = set()
    for doc in documents:
        if doc.id in seen:
            raise CorpusParseError(f"duplicate document id: {doc.id}")
        seen.add(doc.id)
    return documents


def load_toc(path: str | Path) -> list[TocEntry]:
    """Read a TOC index file: a JSON list of {chapter_name, start_page, end_page}."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        TocEntry(
            chapter_name=entry["chapter_name"],
            start_page=int(entry["start_page"]),
            end_page=int(entry["end_page"]),
        )
        for entry in data
    ]


def split_chapters(pages: list[str], toc: list[TocEntry]) -> list[Document]:
    """Consolidate per-page markdown into one Document per TOC chapter."""
    ordered = sorted(toc, key=lambda e: e.start_page)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start_page <= prev.end_page:
            raise ValidationError(
                f"TOC entries overlap: {prev.chapter_name!r} and {cur.chapter_name!r}"
            )
    documents: list[Document] = []
    for entry in ordered:
        if entry.end_page > len(pages):
            raise ValidationError(
                f"TOC entry {entry.chapter_name!r}: page {entry.end_page} out of range (1..{len(pages)})"
            )
        body = "\n".join(pages[entry.start_page - 1 : entry.end_page])
        documents.append(
            Document(
                id=f"chapter-{entry.start_page:04d}",
                source_kind="cwe_chapter",
                title=entry.chapter_name,
                body=body,
                metadata={
                    "chapter_name": entry.chapter_name,
                    "page_range": f"{entry.start_page}-{entry.end_page}",
                },
            )
        )
    return documents


def flat_chunk(doc: Document, cfg: ChunkingConfig) -> list[Chunk]:
    """Fixed-size sliding window over the document body.

    Windows start at 0, stride, 2*stride, ... with stride =
    chunk_size_chars - overlap_chars; the walk stops with the first window
    whose end reaches the document end.
    """
    body = doc.body
    if not body:
        return []
    stride = cfg.chunk_size_chars - cfg.overlap_chars
    chunks: list[Chunk] = []
    start = 0
    while True:
        end = min(start + cfg.chunk_size_chars, len(body))
        raw = body[start:end]
        chunks.append(
            Chunk(
                chunk_id=f"{doc.id}#{start}",
                doc_id=doc.id,
                char_start=start,
                char_end=end,
                raw_text=raw,
                index_text=raw,
            )
        )
        if end == len(body):
            break
        start += stride
    return chunks


def _chat_text(llm: LlmGateway, params: LlmParams, prompt: str) -> str:
    return llm.chat(ChatRequest.build(params, user=prompt)).content


def contextualize_chunks(
    doc: Document,
    chunks: list[Chunk],
    llm: LlmGateway,
    cfg: ChunkingConfig,
    params: LlmParams,
) -> list[Chunk]:
    """Prepend an LLM-generated, cap-truncated context to each chunk.

    A gateway failure on one chunk keeps the chunk with an empty prefix and a
    warning instead of aborting the whole document.
    """
    out: list[Chunk] = []
    for chunk in chunks:
        prompt = llm.render_prompt(
            "chunk_context",
            {
                "doc_title": doc.title,
                "doc_head": doc.body[:1000],
                "chunk_text": chunk.raw_text,
                "context_cap": str(cfg.context_cap_chars),
            },
        )
        try:
            prefix = _chat_text(llm, params, prompt).strip()
        except Exception as err:  # noqa: BLE001 - degrade per chunk
            logger.warning("context generation failed for %s: %s", chunk.chunk_id, err)
            prefix = ""
        prefix = prefix[: cfg.context_cap_chars]
        if not prefix:
            logger.warning("empty context for chunk %s", chunk.chunk_id)
        index_text = f"{prefix}\n\n{chunk.raw_text}" if prefix else chunk.raw_text
        out.append(replace(chunk, context_prefix=prefix, index_text=index_text))
    return out


def _fit_with_suffix(question: str, suffix: str, cap: int) -> str:
    if not suffix:
        return question[:cap]
    return question[: max(1, cap - len(suffix))] + suffix


def generate_hype_questions(
    chunks: list[Chunk],
    llm: LlmGateway,
    cfg: ChunkingConfig,
    params: LlmParams,
) -> list[Chunk]:
    """Attach exactly cfg.hype_questions_per_chunk questions to each chunk.

    Over-production is truncated to the first N questions; under-production is
    padded by duplicating the last question with an index suffix so every
    question still maps to one index record. A gateway failure drops the
    chunk from the HyPE index (questions stay empty) with a warning.
    """
    n = cfg.hype_questions_per_chunk
    cap = cfg.hype_question_cap_chars
    out: list[Chunk] = []
    for chunk in chunks:
        prompt = llm.render_prompt(
            "hype_questions",
            {
                "chunk_text": chunk.raw_text,
                "question_count": str(n),
                "question_cap": str(cap),
            },
        )
        try:
            reply = _chat_text(llm, params, prompt)
        except Exception as err:  # noqa: BLE001 - degrade per chunk
            logger.warning("question generation failed for %s; chunk skipped: %s", chunk.chunk_id, err)
            out.append(replace(chunk, hype_questions=()))
            continue
        questions = [
            re.sub(r"^\s*(?:[-*]|\d+[.)])\s*", "", line).strip()
            for line in reply.splitlines()
            if line.strip()
        ]
        questions = [q[:cap] for q in questions]
        if len(questions) > n:
            questions = questions[:n]
        elif questions and len(questions) < n:
            logger.warning(
                "chunk %s: got %d questions, padding to %d", chunk.chunk_id, len(questions), n
            )
            base = questions[-1]
            idx = 2
            while len(questions) < n:
                questions.append(_fit_with_suffix(base, f" ({idx})", cap))
                idx += 1
        if not questions:
            logger.warning("chunk %s: no questions returned; chunk skipped", chunk.chunk_id)
        out.append(replace(chunk, hype_questions=tuple(questions)))
    return out
