"""Run the full 10-configuration grid over a small benchmark slice.

Two scripted models over three benchmark samples and all ten retrieval
configurations, then aggregation into the result tables.

    python demos/03_experiment_grid.py
"""

from pathlib import Path
from tempfile import TemporaryDirectory

from vulnscribe import (
    LlmGateway,
    LlmParams,
    PipelineContext,
    ScriptedBackend,
    TokenOverlapScorer,
    VectorIndex,
    aggregate,
    config_slug,
    enumerate_grid,
    export_results,
    load_benchmark,
    run_grid,
)

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    gateway = LlmGateway(mode="live", backend=ScriptedBackend())
    ctx = PipelineContext(
        llm=gateway,
        indexes={
            s: VectorIndex.load(ROOT / "fixtures" / "index" / s)
            for s in ("flat", "contextual", "hype")
        },
        agent_params=LlmParams(model_id="model-a"),
        rerank_params=LlmParams(model_id="rerank-m"),
        cross_encoder=TokenOverlapScorer(),
        judges=(
            ("judge-x", LlmParams(model_id="judge-x")),
            ("judge-y", LlmParams(model_id="judge-y")),
        ),
    )

    print("Grid cells:")
    for config in enumerate_grid():
        print(f"  {config_slug(config)}")

    cases = load_benchmark(ROOT / "fixtures" / "bench")[:3]
    print(f"\nBenchmark slice: {', '.join(c.sample_id for c in cases)}")

    models = ["model-a", "model-b"]
    with TemporaryDirectory() as tmp:
        records = run_grid(cases, models, ctx, tmp)
        failures = sum(1 for r in records if r.error is not None)
        print(f"Executed {len(records)} cells ({failures} failures).")

        summary = aggregate(records)
        for model in models:
            print(f"\n{model}:")
            print(f"  best config: {summary.best_config[model]}")
            print(f"  cross-config variance: {summary.model_variance[model]:.4f}")
            lo, q1, med, q3, hi = summary.boxplot[model]
            print(f"  score spread: min={lo:.2f} q1={q1:.2f} "
                  f"median={med:.2f} q3={q3:.2f} max={hi:.2f}")

        written = export_results(summary, records, Path(tmp) / "tables")
        print("\nResult tables:")
        for path in written:
            print(f"  {path.name}: {len(path.read_text().splitlines())} lines")


if __name__ == "__main__":
    main()
