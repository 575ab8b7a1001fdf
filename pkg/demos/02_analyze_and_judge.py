"""Analyze one vulnerable code sample end to end and judge the report.

Retrieval context comes from the bundled pre-built indexes; all model calls
go through the deterministic scripted backend, so the output is reproducible
and needs no network.

    python demos/02_analyze_and_judge.py
"""

import json
from pathlib import Path

from vulnscribe import (
    GroundTruthAnnotation,
    LlmGateway,
    LlmParams,
    PipelineContext,
    RetrievalConfig,
    ScriptedBackend,
    TokenOverlapScorer,
    VectorIndex,
    ingest_codebase,
    judge_report,
    run_pipeline,
)

ROOT = Path(__file__).resolve().parent.parent
SAMPLE = ROOT / "fixtures" / "bench" / "cwe121_packet_header"


def main() -> None:
    gateway = LlmGateway(mode="live", backend=ScriptedBackend())
    ctx = PipelineContext(
        llm=gateway,
        indexes={"flat": VectorIndex.load(ROOT / "fixtures" / "index" / "flat")},
        agent_params=LlmParams(model_id="model-a"),
        cross_encoder=TokenOverlapScorer(),
        judges=(
            ("judge-x", LlmParams(model_id="judge-x")),
            ("judge-y", LlmParams(model_id="judge-y")),
        ),
    )

    payload = ingest_codebase(SAMPLE / "src")
    print(f"Sample {payload.sample_id}: {len(payload.files)} file(s), "
          f"{payload.total_chars} chars")

    config = RetrievalConfig(
        chunking="flat", retrieval="embeddings_only", reranker="cross_encoder"
    )
    result = run_pipeline(payload, config, ctx)
    print(f"Retrieved context chunks: {', '.join(result.retrieved_chunk_ids)}")
    print(f"Explorer CWE matches: {', '.join(result.explorer.cwe_matches)}")
    print(f"Analyst likelihood: {result.analyst.exploitation_likelihood} "
          f"(confidence {result.analyst.confidence})")
    print("\n--- rendered report (first 12 lines) ---")
    for line in result.report_markdown.splitlines()[:12]:
        print(f"  {line}")

    manifest = json.loads((SAMPLE / "manifest.json").read_text())
    truth = GroundTruthAnnotation(
        sample_id=manifest["sample_id"],
        is_vulnerable=manifest["is_vulnerable"],
        cwe_id=manifest["cwe_id"],
        vulnerable_lines=tuple(manifest["vulnerable_lines"]),
        description=manifest["description"],
        fix_hint=manifest.get("fix_hint"),
    )
    summary = judge_report(payload, truth, result.report_markdown, gateway, ctx.judges)
    print("\n--- dual-judge verdict ---")
    for verdict in summary.verdicts:
        print(f"  {verdict.judge_id}: scores={verdict.scores()} "
              f"root_cause={verdict.fix_addresses_root_cause} "
              f"syntax={verdict.syntax_valid}")
    print(f"  pooled overall score: {summary.s_overall}")
    print(f"  remediation success:  {summary.remediation_success}")


if __name__ == "__main__":
    main()
