import json
import string

import pytest
from hypothesis import given, settings, strategies as st

from vulnscribe import (
    ChunkingConfig,
    ConfigError,
    CorpusParseError,
    ValidationError,
    contextualize_chunks,
    flat_chunk,
    generate_hype_questions,
    load_corpus,
    load_toc,
    split_chapters,
)
from vulnscribe.corpus import validate_embedded_tags

from .conftest import make_document


# -- documents and corpus loading -------------------------------------------


def test_document_rejects_empty_body():
    with pytest.raises(ValidationError):
        make_document("")


def test_document_rejects_unknown_source_kind():
    with pytest.raises(ValidationError):
        make_document("body", source_kind="blog_post")


def test_load_corpus_parses_front_matter(tmp_path):
    (tmp_path / "a.md").write_text(
        "---\ntitle: Alpha Report\nsource_kind: project_zero_report\n---\n# Heading\n\nBody text.\n"
    )
    docs = load_corpus(tmp_path)
    assert len(docs) == 1
    assert docs[0].title == "Alpha Report"
    assert docs[0].source_kind == "project_zero_report"
    assert docs[0].body.startswith("# Heading")


def test_load_corpus_title_falls_back_to_heading(tmp_path):
    (tmp_path / "a.md").write_text("# From Heading\n\nBody.\n")
    docs = load_corpus(tmp_path)
    assert docs[0].title == "From Heading"
    assert docs[0].source_kind == "other"


def test_load_corpus_sorted_by_path(tmp_path):
    (tmp_path / "b.md").write_text("second\n")
    (tmp_path / "a.md").write_text("first\n")
    sub = tmp_path / "a_dir"
    sub.mkdir()
    (sub / "c.md").write_text("third\n")
    assert [d.id for d in load_corpus(tmp_path)] == ["a", "a_dir/c", "b"]


def test_load_corpus_missing_root_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_corpus(tmp_path / "nope")


def test_load_corpus_empty_dir_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_corpus(tmp_path)


def test_load_corpus_empty_body_is_parse_error(tmp_path):
    (tmp_path / "a.md").write_text("---\ntitle: x\n---\n\n")
    with pytest.raises(CorpusParseError):
        load_corpus(tmp_path)


def test_embedded_tags_well_nested_ok():
    validate_embedded_tags(
        "pre <START OF CONTENT FOR [u1]> mid <START OF CONTENT FOR [u2]> inner "
        "<END OF CONTENT FOR [u2]> <END OF CONTENT FOR [u1]> post"
    )


@pytest.mark.parametrize(
    "body",
    [
        "<END OF CONTENT FOR [u]> text",
        "<START OF CONTENT FOR [u]> text",
        "<START OF CONTENT FOR [a]> x <END OF CONTENT FOR [b]>",
        "<START OF CONTENT FOR [a]> <START OF CONTENT FOR [b]> "
        "<END OF CONTENT FOR [a]> <END OF CONTENT FOR [b]>",
    ],
)
def test_embedded_tags_malformed_rejected(body):
    with pytest.raises(CorpusParseError):
        validate_embedded_tags(body)


def test_malformed_tags_name_the_file(tmp_path):
    (tmp_path / "bad.md").write_text("text <END OF CONTENT FOR [u]>\n")
    with pytest.raises(CorpusParseError) as err:
        load_corpus(tmp_path)
    assert "bad.md" in str(err.value)
    assert "[u]" in str(err.value)


# -- chapter consolidation ---------------------------------------------------


def _toc_file(tmp_path, entries):
    path = tmp_path / "toc.json"
    path.write_text(json.dumps(entries))
    return path


def test_load_toc_and_split_chapters(tmp_path):
    toc = load_toc(
        _toc_file(
            tmp_path,
            [
                {"chapter_name": "One", "start_page": 1, "end_page": 2},
                {"chapter_name": "Two", "start_page": 3, "end_page": 3},
            ],
        )
    )
    pages = ["p1", "p2", "p3"]
    docs = split_chapters(pages, toc)
    assert [d.title for d in docs] == ["One", "Two"]
    assert docs[0].body == "p1\np2"
    assert docs[1].body == "p3"
    assert docs[0].source_kind == "cwe_chapter"
    assert docs[0].metadata["page_range"] == "1-2"


def test_split_chapters_rejects_overlap():
    from vulnscribe import TocEntry

    toc = [TocEntry("a", 1, 3), TocEntry("b", 3, 4)]
    with pytest.raises(ValidationError):
        split_chapters(["p"] * 4, toc)


def test_split_chapters_rejects_out_of_range():
    from vulnscribe import TocEntry

    with pytest.raises(ValidationError):
        split_chapters(["p1"], [TocEntry("a", 1, 2)])


def test_toc_entry_rejects_inverted_range():
    from vulnscribe import TocEntry

    with pytest.raises(ValidationError):
        TocEntry("a", 3, 2)


# -- flat chunking ------------------------------------------------------------


def test_chunking_config_rejects_overlap_ge_size():
    with pytest.raises(ConfigError):
        ChunkingConfig(chunk_size_chars=100, overlap_chars=100)


def test_flat_chunk_short_document_single_chunk():
    doc = make_document("short body")
    chunks = flat_chunk(doc, ChunkingConfig())
    assert len(chunks) == 1
    assert chunks[0].raw_text == "short body"
    assert chunks[0].chunk_id == "doc#0"


def test_flat_chunk_exact_size_single_chunk():
    doc = make_document("x" * 2000)
    assert len(flat_chunk(doc, ChunkingConfig())) == 1


def test_flat_chunk_window_offsets():
    doc = make_document("a" * 4500)
    chunks = flat_chunk(doc, ChunkingConfig())
    assert [(c.char_start, c.char_end) for c in chunks] == [
        (0, 2000),
        (1800, 3800),
        (3600, 4500),
    ]


def reconstruct(chunks, overlap):
    parts = [chunks[0].raw_text] + [c.raw_text[overlap:] for c in chunks[1:]]
    return "".join(parts)


def test_flat_chunk_reconstruction_default_config():
    doc = make_document(string.printable * 60)
    chunks = flat_chunk(doc, ChunkingConfig())
    assert reconstruct(chunks, 200) == doc.body


@settings(max_examples=150, deadline=None)
@given(
    body=st.text(min_size=1, max_size=6000),
    size=st.integers(min_value=2, max_value=3000),
    overlap_frac=st.floats(min_value=0.0, max_value=0.95),
)
def test_flat_chunk_reconstruction_property(body, size, overlap_frac):
    overlap = min(int(size * overlap_frac), size - 1)
    cfg = ChunkingConfig(chunk_size_chars=size, overlap_chars=overlap)
    doc = make_document(body)
    chunks = flat_chunk(doc, cfg)
    assert reconstruct(chunks, overlap) == body
    # full coverage without gaps
    assert chunks[0].char_start == 0
    assert chunks[-1].char_end == len(body)
    for prev, cur in zip(chunks, chunks[1:]):
        assert cur.char_start <= prev.char_end


@settings(max_examples=60, deadline=None)
@given(body=st.text(min_size=1, max_size=4000))
def test_flat_chunk_offsets_match_body(body):
    doc = make_document(body)
    for chunk in flat_chunk(doc, ChunkingConfig(chunk_size_chars=700, overlap_chars=150)):
        assert body[chunk.char_start : chunk.char_end] == chunk.raw_text
        assert len(chunk.raw_text) <= 700


# -- contextual chunking ------------------------------------------------------


def test_contextualize_prepends_capped_prefix(scripted_gateway, params):
    doc = make_document("alpha beta gamma " * 200)
    cfg = ChunkingConfig(strategy="contextual")
    chunks = flat_chunk(doc, cfg)
    enriched = contextualize_chunks(doc, chunks, scripted_gateway, cfg, params)
    assert len(enriched) == len(chunks)
    for chunk in enriched:
        assert chunk.context_prefix
        assert len(chunk.context_prefix) <= cfg.context_cap_chars
        assert chunk.index_text == f"{chunk.context_prefix}\n\n{chunk.raw_text}"
        assert chunk.raw_text in chunk.index_text


def test_contextualize_survives_gateway_failure(params):
    from vulnscribe import GatewayError, LlmGateway

    class FailingBackend:
        def complete(self, req):
            raise GatewayError("down")

    gateway = LlmGateway(mode="live", backend=FailingBackend())
    doc = make_document("text " * 100)
    cfg = ChunkingConfig(strategy="contextual")
    chunks = flat_chunk(doc, cfg)
    enriched = contextualize_chunks(doc, chunks, gateway, cfg, params)
    assert [c.raw_text for c in enriched] == [c.raw_text for c in chunks]
    for chunk in enriched:
        assert chunk.context_prefix == ""
        assert chunk.index_text == chunk.raw_text


# -- hypothetical questions ---------------------------------------------------


def _stub_gateway(reply: str):
    from vulnscribe import ChatResponse, LlmGateway

    class Backend:
        def complete(self, req):
            return ChatResponse(content=reply)

    return LlmGateway(mode="live", backend=Backend())


def test_hype_exactly_three_questions(scripted_gateway, params):
    doc = make_document("authentication tokens rotate hourly " * 120)
    cfg = ChunkingConfig(strategy="hype")
    chunks = generate_hype_questions(flat_chunk(doc, cfg), scripted_gateway, cfg, params)
    for chunk in chunks:
        assert len(chunk.hype_questions) == 3
        assert all(len(q) <= cfg.hype_question_cap_chars for q in chunk.hype_questions)


def test_hype_overproduction_truncated(params):
    gateway = _stub_gateway("\n".join(f"Question {i}?" for i in range(7)))
    doc = make_document("body")
    cfg = ChunkingConfig(strategy="hype")
    [chunk] = generate_hype_questions(flat_chunk(doc, cfg), gateway, cfg, params)
    assert chunk.hype_questions == ("Question 0?", "Question 1?", "Question 2?")


def test_hype_underproduction_padded_with_suffix(params):
    gateway = _stub_gateway("Only one question?")
    doc = make_document("body")
    cfg = ChunkingConfig(strategy="hype")
    [chunk] = generate_hype_questions(flat_chunk(doc, cfg), gateway, cfg, params)
    assert len(chunk.hype_questions) == 3
    assert chunk.hype_questions[0] == "Only one question?"
    assert chunk.hype_questions[1].endswith(" (2)")
    assert chunk.hype_questions[2].endswith(" (3)")


def test_hype_strips_bullets_and_numbering(params):
    gateway = _stub_gateway("1. First?\n- Second?\n* Third?")
    doc = make_document("body")
    cfg = ChunkingConfig(strategy="hype")
    [chunk] = generate_hype_questions(flat_chunk(doc, cfg), gateway, cfg, params)
    assert chunk.hype_questions == ("First?", "Second?", "Third?")


def test_hype_gateway_failure_leaves_chunk_without_questions(params):
    from vulnscribe import GatewayError, LlmGateway

    class Backend:
        def complete(self, req):
            raise GatewayError("down")

    gateway = LlmGateway(mode="live", backend=Backend())
    doc = make_document("body")
    cfg = ChunkingConfig(strategy="hype")
    [chunk] = generate_hype_questions(flat_chunk(doc, cfg), gateway, cfg, params)
    assert chunk.hype_questions == ()
