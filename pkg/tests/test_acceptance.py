"""Acceptance gate: end-to-end properties the package must satisfy.

Each test pins one externally stated guarantee — chunking reconstruction,
fusion math, ANN fidelity, BM25 oracle equivalence, grid protocol shape,
scoring math, replay determinism, rubric rules, parameter fidelity, and
index persistence — at its stated tolerance.
"""

import itertools
import json
import random
import string
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from vulnscribe import (
    Bm25Index,
    ChunkingConfig,
    CriterionScore,
    HashingEmbedder,
    HnswIndex,
    HybridWeights,
    JudgeVerdict,
    LlmParams,
    PipelineContext,
    ScriptedBackend,
    LlmGateway,
    TokenOverlapScorer,
    ValidationError,
    VectorIndex,
    enumerate_grid,
    flat_chunk,
    fuse_hybrid,
    load_benchmark,
    remediation_success,
    run_grid,
    score_overall,
)
from vulnscribe.agents import REPORT_SECTIONS
from vulnscribe.cli import EXIT_OK, main

from .conftest import FIXTURES, make_document
from .test_bm25 import oracle_bm25
from .test_hnsw import clustered_unit_vectors, exact_top_k


# -- 1. chunking reconstruction ------------------------------------------------


def test_chunking_reconstruction_200_docs_plus_20_configs():
    start = time.monotonic()
    rng = random.Random(1234)
    alphabet = string.printable

    def reconstruct(chunks, overlap):
        return "".join(
            [chunks[0].raw_text] + [c.raw_text[overlap:] for c in chunks[1:]]
        )

    default = ChunkingConfig(chunk_size_chars=2000, overlap_chars=200)
    for _ in range(200):
        length = rng.randint(0, 10_000)
        if length == 0:
            # an empty body cannot form a document at all
            with pytest.raises(ValidationError):
                make_document("")
            continue
        body = "".join(rng.choices(alphabet, k=length))
        chunks = flat_chunk(make_document(body), default)
        assert reconstruct(chunks, default.overlap_chars) == body

    body = "".join(rng.choices(alphabet, k=8_000))
    doc = make_document(body)
    for _ in range(20):
        size = rng.randint(2, 5_000)
        overlap = rng.randint(0, size - 1)
        cfg = ChunkingConfig(chunk_size_chars=size, overlap_chars=overlap)
        assert reconstruct(flat_chunk(doc, cfg), overlap) == body

    assert time.monotonic() - start < 5.0


# -- 2. hybrid fusion math ---------------------------------------------------------


def test_fusion_weighted_sum_and_single_source_orderings():
    rng = random.Random(99)
    ids = [f"c{i:03d}" for i in range(40)]
    for _ in range(25):  # 25 trials x 40 ids = 1000 score pairs
        sem = [(cid, rng.random()) for cid in ids]
        kw = [(cid, rng.random()) for cid in ids]
        w_s = rng.random()
        weights = HybridWeights(w_s, 1.0 - w_s)
        fused = {c.chunk_id: c.score_final for c in fuse_hybrid(sem, kw, weights)}
        for (cid, s), (_, k) in zip(sem, kw):
            assert fused[cid] == pytest.approx(w_s * s + (1.0 - w_s) * k, abs=1e-9)

    # extreme weights reproduce the single-source ordering, ties included
    sem = [("a", 0.5), ("b", 0.9), ("c", 0.5), ("d", 0.1)]
    kw = [("d", 0.7), ("b", 0.7), ("a", 0.2), ("c", 0.0)]

    def source_order(pairs):
        return [cid for cid, _ in sorted(pairs, key=lambda p: (-p[1], p[0]))]

    only_sem = [c.chunk_id for c in fuse_hybrid(sem, kw, HybridWeights(1.0, 0.0))]
    assert only_sem == source_order(sem) == ["b", "a", "c", "d"]
    only_kw = [c.chunk_id for c in fuse_hybrid(sem, kw, HybridWeights(0.0, 1.0))]
    assert only_kw == source_order(kw) == ["b", "d", "a", "c"]


# -- 3. ANN fidelity ------------------------------------------------------------------


def test_hnsw_recall_and_exhaustive_equivalence_at_scale():
    start = time.monotonic()
    vectors = clustered_unit_vectors(10_000, 384, seed=42)
    index = HnswIndex(384)
    for v in vectors:
        index.add(v)

    rng = np.random.default_rng(7)
    queries = []
    for _ in range(100):
        q = vectors[rng.integers(0, len(vectors))] + rng.normal(size=384).astype(
            np.float32
        ) * 0.01
        queries.append((q / np.linalg.norm(q)).astype(np.float32))

    hits = 0
    for q in queries:
        got = {n for n, _ in index.search(q, 10)}
        hits += len(got & set(exact_top_k(vectors, q, 10)))
    assert hits / 1000 >= 0.95

    for q in queries[:100]:
        got = [n for n, _ in index.search(q, 10, ef=len(vectors))]
        assert got == exact_top_k(vectors, q, 10)

    assert time.monotonic() - start < 60.0


# -- 4. BM25 oracle equivalence ---------------------------------------------------------


def test_bm25_matches_independent_oracle():
    rng = random.Random(2024)
    vocab = [f"term{i}" for i in range(120)]
    for _ in range(20):
        n_docs = rng.randint(2, 100)
        docs = {
            f"doc{j:03d}": " ".join(rng.choices(vocab, k=rng.randint(1, 60)))
            for j in range(n_docs)
        }
        index = Bm25Index(k1=1.5, b=0.75)
        for doc_id, text in docs.items():
            index.add(doc_id, text)
        query = " ".join(rng.choices(vocab, k=rng.randint(1, 6)))
        got = dict(index.search(query, n_docs))
        want = oracle_bm25(docs, query, k1=1.5, b=0.75)
        assert set(got) == set(want)
        for doc_id, score in want.items():
            assert got[doc_id] == pytest.approx(score, abs=1e-6)


# -- 5. grid protocol -----------------------------------------------------------------


def test_grid_is_ten_configs_and_four_models_make_forty_cells(tmp_path):
    grid = enumerate_grid()
    assert len(grid) == 10
    by_chunking = {}
    for config in grid:
        by_chunking.setdefault(config.chunking, []).append(config)
    assert len(by_chunking["flat"]) == 4
    assert len(by_chunking["contextual"]) == 4
    assert len(by_chunking["hype"]) == 2

    gateway = LlmGateway(mode="live", backend=ScriptedBackend())
    ctx = PipelineContext(
        llm=gateway,
        indexes={
            s: VectorIndex.load(FIXTURES / "index" / s)
            for s in ("flat", "contextual", "hype")
        },
        agent_params=LlmParams(model_id="model-a"),
        rerank_params=LlmParams(model_id="rerank-m"),
        cross_encoder=TokenOverlapScorer(),
        judges=(("judge-x", LlmParams(model_id="judge-x")),
                ("judge-y", LlmParams(model_id="judge-y"))),
    )
    cases = [c for c in load_benchmark(FIXTURES / "bench")
             if c.sample_id == "cwe119_frame_copy"]
    models = ["model-a", "model-b", "model-c", "model-d"]
    records = run_grid(cases, models, ctx, tmp_path)
    assert len(records) == 40
    assert len(list((tmp_path / "cells").glob("*.json"))) == 40
    assert {(r.model_id, r.config_label) for r in records} == {
        (m, f"{c.chunking}-{c.retrieval}-{c.reranker}") for m in models for c in grid
    }


# -- 6. scoring math ----------------------------------------------------------------


def _verdict(scores, rc=True, sv=True):
    blocks = [CriterionScore(s, "j") for s in scores]
    return JudgeVerdict(
        judge_id="j",
        structural_integrity=blocks[0],
        factual_grounding=blocks[1],
        code_reasoning_quality=blocks[2],
        remediation_quality=blocks[3],
        fix_addresses_root_cause=rc,
        syntax_valid=sv,
        overall_score=sum(scores) / 4.0,
    )


def test_score_overall_exhaustive_and_remediation_flags():
    count = 0
    for vector in itertools.product((0, 5, 10), repeat=8):
        pair = (_verdict(vector[:4]), _verdict(vector[4:]))
        assert abs(score_overall(pair) - sum(vector) / 8.0) <= 1e-12
        count += 1
    assert count == 6561

    true_combos = sum(
        remediation_success((_verdict((5,) * 4, rc=a, sv=b), _verdict((5,) * 4, rc=c, sv=d)))
        for a, b, c, d in itertools.product((False, True), repeat=4)
    )
    assert true_combos == 1


# -- 7 & 8. end-to-end determinism and rubric rules over the bundled replay store -------


ANALYZE_CELL = "flat-embeddings_only-cross_encoder"
VERDICT_KEYS = [
    "structural_integrity",
    "factual_grounding",
    "code_reasoning_quality",
    "remediation_quality",
    "overall_score",
    "judge_id",
]


def _replay_run(sample_dir: Path, out_dir: Path) -> tuple[bytes, bytes]:
    report = out_dir / "report.md"
    code = main([
        "analyze",
        "--replay-dir", str(FIXTURES / "replay"),
        "--index-dir", str(FIXTURES / "index"),
        "--code", str(sample_dir / "src"),
        "--cell", ANALYZE_CELL,
        "--model", "model-a",
        "--out", str(report),
    ])
    assert code == EXIT_OK, f"analyze failed for {sample_dir.name}"
    verdicts = out_dir / "verdicts.json"
    code = main([
        "judge",
        "--replay-dir", str(FIXTURES / "replay"),
        "--index-dir", str(FIXTURES / "index"),
        "--code", str(sample_dir / "src"),
        "--report", str(report),
        "--manifest", str(sample_dir / "manifest.json"),
        "--set", "models.judge1=judge-x",
        "--set", "models.judge2=judge-y",
        "--out", str(verdicts),
    ])
    assert code == EXIT_OK, f"judge failed for {sample_dir.name}"
    return report.read_bytes(), verdicts.read_bytes()


@pytest.fixture(scope="module")
def replay_outputs(tmp_path_factory):
    """analyze + judge for every fixture sample, three consecutive runs."""
    samples = sorted(p for p in (FIXTURES / "bench").iterdir() if p.is_dir())
    assert samples
    runs = []
    for i in range(3):
        root = tmp_path_factory.mktemp(f"replay_run_{i}")
        outputs = {}
        for sample_dir in samples:
            out_dir = root / sample_dir.name
            out_dir.mkdir()
            outputs[sample_dir.name] = _replay_run(sample_dir, out_dir)
        runs.append(outputs)
    return runs


def test_replay_runs_byte_identical_across_three_runs(replay_outputs):
    first, second, third = replay_outputs
    assert first == second == third


def test_vulnerable_reports_have_fourteen_sections_in_order(replay_outputs):
    vulnerable_seen = 0
    for sample_id, (report_bytes, _) in replay_outputs[0].items():
        text = report_bytes.decode("utf-8")
        if "No vulnerability was found" in text:
            continue
        vulnerable_seen += 1
        lines = text.splitlines()
        assert lines[0].startswith("# ")  # title section
        headings = [l[3:] for l in lines if l.startswith("## ")]
        assert headings == list(REPORT_SECTIONS), sample_id
        assert 1 + len(headings) == 14
    assert vulnerable_seen >= 15


def test_verdict_schema_field_names_bit_exact(replay_outputs):
    for sample_id, (_, verdict_bytes) in replay_outputs[0].items():
        data = json.loads(verdict_bytes)
        assert list(data) == ["sample_id", "s_overall", "remediation_success", "verdicts"]
        assert len(data["verdicts"]) == 2
        for verdict in data["verdicts"]:
            assert list(verdict) == VERDICT_KEYS, sample_id
            for dim in VERDICT_KEYS[:3]:
                assert list(verdict[dim]) == ["score", "justification"]
            assert list(verdict["remediation_quality"]) == [
                "score", "justification", "fix_addresses_root_cause", "syntax_valid",
            ]


def test_rubric_hallucinated_cve_zeroes_factual_grounding(replay_outputs):
    _, verdict_bytes = replay_outputs[0]["cwe119_legacy_input"]
    data = json.loads(verdict_bytes)
    for verdict in data["verdicts"]:
        assert verdict["factual_grounding"]["score"] == 0


def test_rubric_false_negative_zeroes_whole_evaluation(replay_outputs):
    report_bytes, verdict_bytes = replay_outputs[0]["cwe457_flag_mask"]
    assert b"No vulnerability was found" in report_bytes
    data = json.loads(verdict_bytes)
    assert data["s_overall"] == 0.0
    assert data["remediation_success"] is False
    for verdict in data["verdicts"]:
        for dim in VERDICT_KEYS[:4]:
            assert verdict[dim]["score"] == 0
        assert verdict["remediation_quality"]["fix_addresses_root_cause"] is False
        assert verdict["remediation_quality"]["syntax_valid"] is False


# -- 9. parameter fidelity ----------------------------------------------------------


def test_default_config_dump_parameter_fidelity(capsys):
    assert main(["config"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["generation"]["temperature"] == 0.6
    assert data["generation"]["top_p"] == 0.95
    assert data["chunking"]["chunk_size_chars"] == 2000
    assert data["chunking"]["overlap_chars"] == 200
    assert data["chunking"]["context_cap_chars"] == 200
    assert data["chunking"]["hype_questions_per_chunk"] == 3
    assert data["chunking"]["hype_question_cap_chars"] == 200
    assert data["retrieval"]["top_k"] == 10
    assert data["retrieval"]["num_candidates"] == 2
    assert data["retrieval"]["w_semantic"] == 0.6
    assert data["retrieval"]["w_keyword"] == 0.4


# -- 10. persistence across a process restart ------------------------------------------


def test_index_persists_across_process_restart(tmp_path):
    emb = HashingEmbedder(dim=64)
    rng = random.Random(7)
    vocab = [f"tok{i}" for i in range(200)]
    texts = [" ".join(rng.choices(vocab, k=12)) for _ in range(120)]

    from vulnscribe import IndexRecord

    index = VectorIndex(dim=64, strategy="flat")
    index.upsert([
        IndexRecord(f"r{i:03d}", f"r{i:03d}", emb.embed_one(t), t, "chunk_text")
        for i, t in enumerate(texts)
    ])
    target = tmp_path / "idx"
    index.save(target)

    queries = [" ".join(rng.choices(vocab, k=4)) for _ in range(50)]
    expected = [index.exact_search(emb.embed_one(q), 10) for q in queries]

    script = (
        "import json, sys\n"
        "from vulnscribe import VectorIndex\n"
        "from vulnscribe.gateway import HashingEmbedder\n"
        "emb = HashingEmbedder(dim=64)\n"
        "index = VectorIndex.load(sys.argv[1])\n"
        "queries = json.loads(sys.argv[2])\n"
        "out = [index.exact_search(emb.embed_one(q), 10) for q in queries]\n"
        "print(json.dumps(out))\n"
    )
    proc = subprocess.run(
        [sys.executable, "-c", script, str(target), json.dumps(queries)],
        capture_output=True, text=True, check=True,
    )
    restored = json.loads(proc.stdout)
    assert restored == [[[rid, sim] for rid, sim in hits] for hits in expected]
