"""Sparse TF-IDF: tf = 1 + ln(count), idf = ln(N / df), L2-normalized rows."""
from __future__ import annotations

import math
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from types import MappingProxyType

SparseVec = dict[str, float]


@dataclass(frozen=True)
class TfidfModel:
    idf: Mapping[str, float]
    n_docs: int

    @classmethod
    def fit(cls, docs: Iterable[Sequence[str]], max_vocab: int | None = None) -> TfidfModel:
        df: Counter = Counter()
        n = 0
        for doc in docs:
            df.update(set(doc))
            n += 1
        items = sorted(df.items(), key=lambda kv: (-kv[1], kv[0]))
        if max_vocab is not None:
            items = items[:max_vocab]
        idf = {w: math.log(n / c) for w, c in items}
        return cls(MappingProxyType(dict(sorted(idf.items()))), n)

    def vocabulary(self) -> tuple[str, ...]:
        return tuple(self.idf)

    def transform(self, tokens: Sequence[str]) -> SparseVec:
        """Unknown and zero-idf words are dropped; an all-zero row stays empty."""
        counts = Counter(t for t in tokens if t in self.idf)
        vec = {w: (1 + math.log(c)) * self.idf[w] for w, c in counts.items()}
        vec = {w: v for w, v in vec.items() if v > 0}
        norm = math.sqrt(math.fsum(v * v for v in vec.values()))
        if norm == 0:
            return {}
        return {w: v / norm for w, v in sorted(vec.items())}


def cosine(a: Mapping[str, float], b: Mapping[str, float]) -> float:
    """Dot product of two L2-normalized sparse vectors."""
    if len(a) > len(b):
        a, b = b, a
    return math.fsum(v * b[w] for w, v in a.items() if w in b)
