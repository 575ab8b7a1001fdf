"""Okapi BM25 keyword index.

Scoring uses the classic Okapi formulation with a floor at zero via the
+1-inside-the-log idf variant:

    idf(t)  = ln( (N - df + 0.5) / (df + 0.5) + 1 )
    s(d, q) = sum over query terms t of
              idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d)/avg_len))

Tokenization: lowercase, split on non-alphanumeric runs, drop empties.
"""

from __future__ import annotations

import math
import re
from collections import Counter, defaultdict

from .errors import ConfigError

DEFAULT_K1 = 1.5
DEFAULT_B = 0.75

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class Bm25Index:
    def __init__(self, k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> None:
        if k1 < 0 or not 0 <= b <= 1:
            raise ConfigError(f"invalid BM25 parameters: k1={k1}, b={b}")
        self.k1 = k1
        self.b = b
        self._tf: dict[str, Counter[str]] = {}  # doc_id -> term counts
        self._lengths: dict[str, int] = {}
        self._postings: dict[str, set[str]] = defaultdict(set)  # term -> doc ids

    def __len__(self) -> int:
        return len(self._tf)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._tf

    def add(self, doc_id: str, text: str) -> None:
        if doc_id in self._tf:
            self.remove(doc_id)
        tokens = tokenize(text)
        counts = Counter(tokens)
        self._tf[doc_id] = counts
        self._lengths[doc_id] = len(tokens)
        for term in counts:
            self._postings[term].add(doc_id)

    def remove(self, doc_id: str) -> None:
        counts = self._tf.pop(doc_id, None)
        if counts is None:
            return
        del self._lengths[doc_id]
        for term in counts:
            docs = self._postings[term]
            docs.discard(doc_id)
            if not docs:
                del self._postings[term]

    def idf(self, term: str) -> float:
        n = len(self._tf)
        df = len(self._postings.get(term, ()))
        return math.log((n - df + 0.5) / (df + 0.5) + 1.0)

    def search(self, query: str, k: int) -> list[tuple[str, float]]:
        """Top-k (doc_id, score); only documents matching >=1 query term appear."""
        terms = tokenize(query)
        if not terms or not self._tf:
            return []
        n = len(self._tf)
        avg_len = sum(self._lengths.values()) / n
        scores: dict[str, float] = defaultdict(float)
        for term in Counter(terms):
            docs = self._postings.get(term)
            if not docs:
                continue
            idf = self.idf(term)
            for doc_id in docs:
                tf = self._tf[doc_id][term]
                length_norm = 1 - self.b + self.b * self._lengths[doc_id] / avg_len
                scores[doc_id] += idf * tf * (self.k1 + 1) / (tf + self.k1 * length_norm)
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        return ranked[:k]

    # -- persistence -------------------------------------------------------

    def state(self) -> dict:
        return {
            "k1": self.k1,
            "b": self.b,
            "tf": {doc: dict(counts) for doc, counts in self._tf.items()},
            "lengths": dict(self._lengths),
        }

    @classmethod
    def from_state(cls, state: dict) -> "Bm25Index":
        index = cls(k1=state["k1"], b=state["b"])
        for doc_id, counts in state["tf"].items():
            index._tf[doc_id] = Counter(counts)
            index._lengths[doc_id] = state["lengths"][doc_id]
            for term in counts:
                index._postings[term].add(doc_id)
        return index
