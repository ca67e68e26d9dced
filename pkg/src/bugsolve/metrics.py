"""Sentence-level BLEU-4, exact-match METEOR, ROUGE-1/2/L.

All scores are in [0, 1]. Frozen formula choices:

* BLEU-4: clipped n-gram precisions for n=1..4; for n >= 2 a zero match
  count is replaced by 1 / (hyp n-gram count + 1); geometric mean times the
  brevity penalty exp(1 - |ref|/|hyp|) when the hypothesis is shorter.
* METEOR: exact unigram matches only (no stemming or synonyms), alignment
  with the maximum number of matches and, among those, the fewest chunks;
  F = 10PR / (R + 9P), penalty = 0.5 * (chunks / matches) ** 3.
* ROUGE-L: plain sentence-level LCS.
"""
from __future__ import annotations

import math
from collections import Counter
from collections.abc import Mapping, Sequence
from typing import NamedTuple

from pydantic import BaseModel

METRIC_KEYS = ("bleu4", "meteor", "rouge1_f", "rouge2_f", "rougeL_f")


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _require_ref(reference: Sequence[str]) -> None:
    if not reference:
        raise ValueError("reference must be non-empty")


def _prf(overlap: int, hyp_total: int, ref_total: int) -> PRF:
    p = overlap / hyp_total if hyp_total else 0.0
    r = overlap / ref_total if ref_total else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return PRF(p, r, f)


def bleu4(hypothesis: Sequence[str], reference: Sequence[str]) -> float:
    _require_ref(reference)
    if not hypothesis:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        hyp_ng = ngrams(hypothesis, n)
        total = sum(hyp_ng.values())
        matches = sum((hyp_ng & ngrams(reference, n)).values())
        if matches == 0:
            if n == 1:
                return 0.0
            p = 1.0 / (total + 1)
        else:
            p = matches / total
        log_sum += math.log(p)
    bp = 1.0 if len(hypothesis) >= len(reference) else math.exp(1 - len(reference) / len(hypothesis))
    return bp * math.exp(log_sum / 4)


def rouge_n(hypothesis: Sequence[str], reference: Sequence[str], n: int = 1) -> PRF:
    _require_ref(reference)
    hyp_ng, ref_ng = ngrams(hypothesis, n), ngrams(reference, n)
    return _prf(sum((hyp_ng & ref_ng).values()), sum(hyp_ng.values()), sum(ref_ng.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(hypothesis: Sequence[str], reference: Sequence[str]) -> PRF:
    _require_ref(reference)
    return _prf(lcs_length(hypothesis, reference), len(hypothesis), len(reference))


# --- METEOR alignment -------------------------------------------------------

_SEARCH_BUDGET = 200_000


def _count_chunks(pairs: Sequence[tuple[int, int]]) -> int:
    pairs = sorted(pairs)
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or (i, j) != (prev[0] + 1, prev[1] + 1):
            chunks += 1
        prev = (i, j)
    return chunks


def _greedy_tiling(hyp: Sequence[str], ref: Sequence[str]) -> list[tuple[int, int]]:
    used_h = [False] * len(hyp)
    used_r = [False] * len(ref)
    pairs: list[tuple[int, int]] = []
    while True:
        best = (0, 0, 0)
        for i in range(len(hyp)):
            for j in range(len(ref)):
                k = 0
                while (
                    i + k < len(hyp)
                    and j + k < len(ref)
                    and not used_h[i + k]
                    and not used_r[j + k]
                    and hyp[i + k] == ref[j + k]
                ):
                    k += 1
                if k > best[0]:
                    best = (k, i, j)
        k, i, j = best
        if k == 0:
            return pairs
        for d in range(k):
            used_h[i + d] = used_r[j + d] = True
            pairs.append((i + d, j + d))


def align(hyp: Sequence[str], ref: Sequence[str]) -> tuple[int, int]:
    """(matches, chunks) of a max-match, min-chunk exact alignment.

    Branch-and-bound search seeded with a greedy tiling; if the node budget
    runs out the best alignment found so far is kept.
    """
    budget_h = Counter(hyp)
    budget_r = Counter(ref)
    skips = {w: c - min(c, budget_r[w]) for w, c in budget_h.items()}
    matches = sum(min(c, budget_r[w]) for w, c in budget_h.items())
    if matches == 0:
        return 0, 0
    best = [_count_chunks(_greedy_tiling(hyp, ref))]
    if best[0] == 1:
        return matches, 1
    ref_pos: dict[str, list[int]] = {}
    for j, w in enumerate(ref):
        ref_pos.setdefault(w, []).append(j)
    used = [False] * len(ref)
    skip_left = dict(skips)
    nodes = [0]

    def dfs(i: int, last: tuple[int, int] | None, chunks: int) -> None:
        if chunks >= best[0] or nodes[0] > _SEARCH_BUDGET:
            return
        nodes[0] += 1
        if i == len(hyp):
            best[0] = chunks
            return
        w = hyp[i]
        cands = [j for j in ref_pos.get(w, ()) if not used[j]]
        if last is not None and last[0] == i - 1 and last[1] + 1 in cands:
            cands.remove(last[1] + 1)
            cands.insert(0, last[1] + 1)
        for j in cands:
            cont = last is not None and last == (i - 1, j - 1)
            used[j] = True
            dfs(i + 1, (i, j), chunks + (0 if cont else 1))
            used[j] = False
        if skip_left.get(w, 0) > 0:
            skip_left[w] -= 1
            dfs(i + 1, last, chunks)
            skip_left[w] += 1

    dfs(0, None, 0)
    return matches, best[0]


def meteor_lite(hypothesis: Sequence[str], reference: Sequence[str]) -> float:
    _require_ref(reference)
    if not hypothesis:
        return 0.0
    m, chunks = align(hypothesis, reference)
    if m == 0:
        return 0.0
    p = m / len(hypothesis)
    r = m / len(reference)
    fmean = 10 * p * r / (r + 9 * p)
    penalty = 0.5 * (chunks / m) ** 3
    return fmean * (1 - penalty)


def score_all(hypothesis: Sequence[str], reference: Sequence[str]) -> dict[str, float]:
    return {
        "bleu4": bleu4(hypothesis, reference),
        "meteor": meteor_lite(hypothesis, reference),
        "rouge1_f": rouge_n(hypothesis, reference, 1).f1,
        "rouge2_f": rouge_n(hypothesis, reference, 2).f1,
        "rougeL_f": rouge_l(hypothesis, reference).f1,
    }


class MetricReport(BaseModel):
    per_example: dict[str, dict[str, float]]
    aggregate: dict[str, float]
    n: int


def build_report(per_example: Mapping[str, Mapping[str, float]], keys: Sequence[str] = METRIC_KEYS) -> MetricReport:
    ids = sorted(per_example)
    rows = {i: {k: float(per_example[i][k]) for k in keys} for i in ids}
    n = len(ids)
    agg = {k: (math.fsum(rows[i][k] for i in ids) / n if n else 0.0) for k in keys}
    return MetricReport(per_example=rows, aggregate=agg, n=n)


def score_corpus(
    hypotheses: Mapping[str, Sequence[str]],
    references: Mapping[str, Sequence[str]],
    keys: Sequence[str] = METRIC_KEYS,
) -> MetricReport:
    """Score every reference id; a missing hypothesis counts as empty output."""
    per = {}
    for ex_id, ref in references.items():
        scores = score_all(hypotheses.get(ex_id, ()), ref)
        per[ex_id] = {k: scores[k] for k in keys}
    return build_report(per, keys)
