import numpy as np
import pytest

from vulnscribe import ConfigError, HnswIndex


def clustered_unit_vectors(n, dim, seed, n_centers=32, spread=0.6):
    """Unit vectors drawn around random centers: realistic embedding geometry."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(n_centers, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    idx = rng.integers(0, n_centers, size=n)
    noise = rng.normal(size=(n, dim)) * (spread / np.sqrt(dim))
    vecs = centers[idx] + noise
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return vecs.astype(np.float32)


def exact_top_k(vectors, q, k):
    sims = vectors @ q
    order = sorted(range(len(sims)), key=lambda i: (-sims[i], i))
    return order[:k]


def build(vectors, **kwargs):
    index = HnswIndex(vectors.shape[1], **kwargs)
    for v in vectors:
        index.add(v)
    return index


def test_single_vector():
    index = HnswIndex(4)
    v = np.array([1.0, 0.0, 0.0, 0.0], dtype=np.float32)
    assert index.add(v) == 0
    [(node, sim)] = index.search(v, 1)
    assert node == 0
    assert sim == pytest.approx(1.0)


def test_dimension_mismatch_rejected():
    index = HnswIndex(4)
    with pytest.raises(ConfigError):
        index.add(np.zeros(5, dtype=np.float32))
    with pytest.raises(ConfigError):
        index.search(np.zeros(3, dtype=np.float32), 1)


def test_invalid_construction_params():
    with pytest.raises(ConfigError):
        HnswIndex(0)
    with pytest.raises(ConfigError):
        HnswIndex(4, m=1)


def test_empty_index_returns_nothing():
    assert HnswIndex(4).search(np.ones(4, dtype=np.float32), 5) == []


def test_results_sorted_descending_no_duplicates():
    vectors = clustered_unit_vectors(500, 32, seed=1)
    index = build(vectors, m=8, ef_construction=64, ef_search=64)
    hits = index.search(vectors[17], 10)
    sims = [s for _, s in hits]
    assert sims == sorted(sims, reverse=True)
    assert len({n for n, _ in hits}) == len(hits)
    assert hits[0][0] == 17  # query vector is in the index


def test_exhaustive_ef_matches_exact_oracle():
    vectors = clustered_unit_vectors(300, 16, seed=2)
    index = build(vectors, m=8, ef_construction=64)
    rng = np.random.default_rng(3)
    for _ in range(20):
        q = rng.normal(size=16)
        q = (q / np.linalg.norm(q)).astype(np.float32)
        got = [n for n, _ in index.search(q, 10, ef=len(vectors))]
        assert got == exact_top_k(vectors, q, 10)


def test_high_recall_on_clustered_data():
    vectors = clustered_unit_vectors(2000, 64, seed=4)
    index = build(vectors)
    rng = np.random.default_rng(5)
    hits = total = 0
    for _ in range(50):
        q = vectors[rng.integers(0, len(vectors))] + rng.normal(size=64).astype(np.float32) * 0.01
        q = (q / np.linalg.norm(q)).astype(np.float32)
        got = {n for n, _ in index.search(q, 10)}
        want = set(exact_top_k(vectors, q, 10))
        hits += len(got & want)
        total += 10
    assert hits / total >= 0.95


def test_build_deterministic_for_fixed_seed():
    vectors = clustered_unit_vectors(400, 24, seed=6)
    a = build(vectors, m=8, ef_construction=50, seed=7)
    b = build(vectors, m=8, ef_construction=50, seed=7)
    q = vectors[3]
    assert a.search(q, 10) == b.search(q, 10)
    assert a.state()["neighbors"] == b.state()["neighbors"]


def test_state_roundtrip_preserves_search():
    vectors = clustered_unit_vectors(300, 16, seed=8)
    index = build(vectors, m=8, ef_construction=50)
    restored = HnswIndex.from_state(index.state(), index.vectors_array())
    rng = np.random.default_rng(9)
    for _ in range(10):
        q = rng.normal(size=16)
        q = (q / np.linalg.norm(q)).astype(np.float32)
        assert index.search(q, 5) == restored.search(q, 5)


def test_layer0_degree_bounded():
    vectors = clustered_unit_vectors(600, 16, seed=10)
    index = build(vectors, m=6, ef_construction=40)
    state = index.state()
    for node_layers in state["neighbors"]:
        assert len(node_layers[0]) <= 12  # m_max0 = 2m
        for layer in node_layers[1:]:
            assert len(layer) <= 6
