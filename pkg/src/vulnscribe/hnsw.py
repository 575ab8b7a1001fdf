"""Hierarchical navigable small-world graph for approximate nearest neighbors.

Cosine similarity over unit-normalized vectors; nodes are dense integer ids
assigned by insertion order. Neighbor selection uses the diversity heuristic
(a candidate is kept only if it is closer to the query than to any already
selected neighbor), which keeps the graph navigable on clustered data.
"""

from __future__ import annotations

import heapq
import math
import random

import numpy as np

from .errors import ConfigError

DEFAULT_M = 16
DEFAULT_EF_CONSTRUCTION = 200
DEFAULT_EF_SEARCH = 100


class HnswIndex:
    def __init__(
        self,
        dim: int,
        m: int = DEFAULT_M,
        ef_construction: int = DEFAULT_EF_CONSTRUCTION,
        ef_search: int = DEFAULT_EF_SEARCH,
        seed: int = 42,
    ) -> None:
        if dim <= 0 or m <= 1:
            raise ConfigError("dim must be positive and m > 1")
        self.dim = dim
        self.m = m
        self.m_max0 = 2 * m
        self.ef_construction = ef_construction
        self.ef_search = ef_search
        self.seed = seed
        self._rng = random.Random(seed)
        self._level_mult = 1.0 / math.log(m)
        self._vectors = np.zeros((0, dim), dtype=np.float32)
        self._count = 0
        # _neighbors[node][layer] -> list of neighbor node ids
        self._neighbors: list[list[list[int]]] = []
        self._entry: int | None = None
        self._max_level = -1

    def __len__(self) -> int:
        return self._count

    # -- internal helpers -------------------------------------------------

    def _ensure_capacity(self, n: int) -> None:
        if n <= self._vectors.shape[0]:
            return
        cap = max(1024, 2 * self._vectors.shape[0], n)
        grown = np.zeros((cap, self.dim), dtype=np.float32)
        grown[: self._count] = self._vectors[: self._count]
        self._vectors = grown

    def _sims(self, ids: list[int], q: np.ndarray) -> np.ndarray:
        return self._vectors[ids] @ q

    def _search_layer(
        self,
        all_sims: np.ndarray,
        entry_points: list[tuple[float, int]],
        ef: int,
        layer: int,
    ) -> list[tuple[float, int]]:
        """Best-first search on one layer; returns up to ef (sim, id) pairs.

        ``all_sims`` holds the query's similarity to every stored vector,
        computed once per query with a single matrix-vector product; the graph
        walk then only does array lookups.
        """
        neighbors = self._neighbors
        visited = bytearray(self._count)
        candidates: list[tuple[float, int]] = []  # max-heap via negated sim
        results: list[tuple[float, int]] = []  # min-heap by sim
        for sim, node in entry_points:
            if visited[node]:
                continue
            visited[node] = 1
            heapq.heappush(candidates, (-sim, node))
            heapq.heappush(results, (sim, node))
        pop = heapq.heappop
        push = heapq.heappush
        replace_ = heapq.heapreplace
        while candidates:
            neg_sim, node = pop(candidates)
            full = len(results) >= ef
            if full and -neg_sim < results[0][0]:
                break
            fresh = [nb for nb in neighbors[node][layer] if not visited[nb]]
            if not fresh:
                continue
            for nb in fresh:
                visited[nb] = 1
            sims = all_sims[fresh]
            if full:
                # stale bound only admits extras; exact bound re-checked below
                bound = results[0][0]
                keep = sims > bound
                fresh = [nb for nb, ok in zip(fresh, keep.tolist()) if ok]
                sims = sims[keep]
            for nb, sim in zip(fresh, sims.tolist()):
                if len(results) < ef:
                    push(results, (sim, nb))
                    push(candidates, (-sim, nb))
                elif sim > results[0][0]:
                    replace_(results, (sim, nb))
                    push(candidates, (-sim, nb))
        return results

    def _select_neighbors(self, q: np.ndarray, candidates: list[tuple[float, int]], m: int) -> list[int]:
        """Diversity-heuristic neighbor selection from (sim, id) candidates.

        A candidate is accepted only while it is closer to the query than to
        every already-accepted neighbor; remaining slots are filled with the
        closest rejected candidates so nodes keep m links.
        """
        ordered = sorted(candidates, key=lambda p: (-p[0], p[1]))
        if len(ordered) <= m:
            return [n for _, n in ordered]
        ids = [n for _, n in ordered]
        sims_q = [s for s, _ in ordered]
        vecs = self._vectors[ids]
        max_sim_selected = np.full(len(ids), -np.inf)
        selected: list[int] = []
        rejected: list[int] = []
        for i, sim in enumerate(sims_q):
            if len(selected) >= m:
                break
            if max_sim_selected[i] < sim:
                selected.append(i)
                np.maximum(max_sim_selected, vecs @ vecs[i], out=max_sim_selected)
            else:
                rejected.append(i)
        for i in rejected:
            if len(selected) >= m:
                break
            selected.append(i)
        return [ids[i] for i in selected]

    def _link(self, node: int, neighbors: list[int], layer: int) -> None:
        self._neighbors[node][layer] = list(neighbors)
        m_max = self.m_max0 if layer == 0 else self.m
        for nb in neighbors:
            links = self._neighbors[nb][layer]
            links.append(node)
            if len(links) > m_max:
                vec = self._vectors[nb]
                sims = self._vectors[links] @ vec
                cands = list(zip(sims.tolist(), links))
                self._neighbors[nb][layer] = self._select_neighbors(vec, cands, m_max)

    # -- public API --------------------------------------------------------

    def add(self, vector: np.ndarray) -> int:
        """Insert one unit vector; returns the assigned node id."""
        if vector.shape != (self.dim,):
            raise ConfigError(f"vector dimension {vector.shape} != ({self.dim},)")
        node = self._count
        self._ensure_capacity(node + 1)
        self._vectors[node] = vector
        self._count += 1
        level = int(-math.log(max(self._rng.random(), 1e-12)) * self._level_mult)
        self._neighbors.append([[] for _ in range(level + 1)])
        if self._entry is None:
            self._entry = node
            self._max_level = level
            return node
        q = self._vectors[node]
        all_sims = self._vectors[: self._count] @ q
        ep = [(float(all_sims[self._entry]), self._entry)]
        for layer in range(self._max_level, level, -1):
            ep = self._search_layer(all_sims, ep, 1, layer)
        for layer in range(min(level, self._max_level), -1, -1):
            found = self._search_layer(all_sims, ep, self.ef_construction, layer)
            m_max = self.m_max0 if layer == 0 else self.m
            neighbors = self._select_neighbors(q, found, min(self.m, m_max))
            self._link(node, neighbors, layer)
            ep = found
        if level > self._max_level:
            self._max_level = level
            self._entry = node
        return node

    def search(self, query: np.ndarray, k: int, ef: int | None = None) -> list[tuple[int, float]]:
        """Top-k (node_id, cosine_similarity), descending similarity."""
        if query.shape != (self.dim,):
            raise ConfigError(f"query dimension {query.shape} != ({self.dim},)")
        if self._entry is None or k < 1:
            return []
        ef = max(self.ef_search if ef is None else ef, k)
        q = query.astype(np.float32)
        all_sims = self._vectors[: self._count] @ q
        ep = [(float(all_sims[self._entry]), self._entry)]
        for layer in range(self._max_level, 0, -1):
            ep = self._search_layer(all_sims, ep, 1, layer)
        results = self._search_layer(all_sims, ep, ef, 0)
        top = sorted(results, key=lambda p: (-p[0], p[1]))[:k]
        return [(node, sim) for sim, node in top]

    def vector(self, node: int) -> np.ndarray:
        return self._vectors[node]

    # -- persistence -------------------------------------------------------

    def state(self) -> dict:
        return {
            "dim": self.dim,
            "m": self.m,
            "ef_construction": self.ef_construction,
            "ef_search": self.ef_search,
            "seed": self.seed,
            "count": self._count,
            "entry": self._entry,
            "max_level": self._max_level,
            "neighbors": self._neighbors,
        }

    def vectors_array(self) -> np.ndarray:
        return self._vectors[: self._count].copy()

    @classmethod
    def from_state(cls, state: dict, vectors: np.ndarray) -> "HnswIndex":
        index = cls(
            dim=state["dim"],
            m=state["m"],
            ef_construction=state["ef_construction"],
            ef_search=state["ef_search"],
            seed=state["seed"],
        )
        index._count = state["count"]
        index._vectors = vectors.astype(np.float32).copy()
        index._neighbors = [[list(layer) for layer in node] for node in state["neighbors"]]
        index._entry = state["entry"]
        index._max_level = state["max_level"]
        return index
