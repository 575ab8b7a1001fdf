"""Build a knowledge-base index from the bundled corpus and query it.

Runs fully offline: chunking, contextual enrichment via the deterministic
scripted backend, indexing (HNSW + BM25), and a few hybrid queries.

    python demos/01_build_and_query.py
"""

from pathlib import Path
from tempfile import TemporaryDirectory

from vulnscribe import (
    ChunkingConfig,
    LlmGateway,
    LlmParams,
    RetrievalConfig,
    Retriever,
    ScriptedBackend,
    VectorIndex,
    build_index,
    contextualize_chunks,
    flat_chunk,
    load_corpus,
)

CORPUS = Path(__file__).resolve().parent.parent / "fixtures" / "corpus"


def main() -> None:
    gateway = LlmGateway(mode="live", backend=ScriptedBackend())
    params = LlmParams(model_id="ctx-model")

    print(f"Loading corpus from {CORPUS} ...")
    documents = load_corpus(CORPUS)
    print(f"  {len(documents)} documents: {', '.join(d.id for d in documents)}")

    cfg = ChunkingConfig(strategy="contextual")
    chunks = []
    for doc in documents:
        doc_chunks = flat_chunk(doc, cfg)
        chunks.extend(contextualize_chunks(doc, doc_chunks, gateway, cfg, params))
    print(f"  {len(chunks)} chunks with generated context prefixes")
    print(f"  example prefix: {chunks[0].context_prefix!r}")

    index = build_index(chunks, "contextual", gateway.embed, dim=384)
    print(f"Built index with {len(index)} records (HNSW + BM25).")

    with TemporaryDirectory() as tmp:
        target = Path(tmp) / "index"
        index.save(target)
        index = VectorIndex.load(target)
        print(f"Round-tripped the index through {target}.")

    retriever = Retriever(index, gateway)
    for query in (
        "stack buffer overflow from strcpy",
        "use after free dangling pointer",
        "uninitialized variable read",
    ):
        config = RetrievalConfig(
            chunking="contextual", retrieval="hybrid", reranker="none", top_k=3
        )
        print(f"\nQuery: {query}")
        for hit in retriever.retrieve(config, query):
            preview = " ".join(hit.raw_text.split())[:70]
            print(f"  {hit.rank}. [{hit.score_final:.3f}] {hit.chunk_id}  {preview}")


if __name__ == "__main__":
    main()
