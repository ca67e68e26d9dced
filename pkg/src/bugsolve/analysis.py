"""N-gram novelty and overlap analyses, decile buckets, and when-accuracy tables."""
from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence

from pydantic import BaseModel

from bugsolve.corpus import Example
from bugsolve.metrics import METRIC_KEYS, ngrams

TG_BUCKETS = ("1", "2", "3", "4", "≥5")


class CoverageError(ValueError):
    """A gold id has no prediction."""


Tokens = Sequence[str]


def _segments(context: Tokens | Sequence[Tokens]) -> list[Tokens]:
    # a flat token list is one segment; a list of lists keeps n-grams inside each part
    if not context:
        return []
    if isinstance(context[0], str):
        return [context]
    return list(context)


def ngram_set(context: Tokens | Sequence[Tokens], n: int) -> set[tuple[str, ...]]:
    out: set[tuple[str, ...]] = set()
    for seg in _segments(context):
        out.update(ngrams(seg, n))
    return out


def _occurrences(tokens: Tokens, n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def novel_counts(reference: Tokens, context: Tokens | Sequence[Tokens], n: int) -> tuple[int, int]:
    """(novel occurrences, total occurrences) of the reference's n-grams."""
    grams = _occurrences(reference, n)
    seen = ngram_set(context, n)
    return sum(g not in seen for g in grams), len(grams)


def novel_ngrams(reference: Tokens, context: Tokens | Sequence[Tokens], n: int) -> float | None:
    """Percent of reference n-gram occurrences missing from the context; None
    when the reference is shorter than n."""
    novel, total = novel_counts(reference, context, n)
    return None if total == 0 else 100 * novel / total


def overlap_counts(tokens: Tokens, title: Tokens, utterances: Sequence[Tokens], n: int) -> tuple[int, int, int]:
    grams = _occurrences(tokens, n)
    in_title = ngram_set(title, n)
    in_utts = ngram_set(utterances, n)
    t = sum(g in in_title for g in grams)
    u = sum(g not in in_title and g in in_utts for g in grams)
    return t, u, len(grams)


def overlap_report(tokens: Tokens, title: Tokens, utterances: Sequence[Tokens], n: int) -> tuple[float, float] | None:
    """(% of n-grams found in the title, % found in the utterances but not the title)."""
    t, u, total = overlap_counts(tokens, title, utterances, n)
    if total == 0:
        return None
    return 100 * t / total, 100 * u / total


def _context_parts(example: Example) -> tuple[Tokens, list[Tokens]]:
    return example.title_tokens, [u.tokens for u in example.utterances[: example.t_g]]


def novel_ngram_table(examples: Sequence[Example], ns: Sequence[int] = (1, 2, 3, 4)) -> dict[str, dict[int, float | None]]:
    """Novel-n-gram percentages pooled over the corpus against the title, the
    utterances up to t_g, and both together."""
    rows: dict[str, dict[int, float | None]] = {"title": {}, "utterances": {}, "title+utterances": {}}
    for n in ns:
        acc = {k: [0, 0] for k in rows}
        for ex in examples:
            title, utts = _context_parts(ex)
            for key, ctx in (("title", [title]), ("utterances", utts), ("title+utterances", [title, *utts])):
                novel, total = novel_counts(ex.description_tokens, ctx, n)
                acc[key][0] += novel
                acc[key][1] += total
        for key, (novel, total) in acc.items():
            rows[key][n] = 100 * novel / total if total else None
    return rows


def overlap_table(
    outputs: Mapping[str, Tokens], examples: Sequence[Example], ns: Sequence[int] = (1, 2)
) -> dict[int, tuple[float, float] | None]:
    """Pooled overlap of each example's output with its title and U_1..U_tg."""
    out: dict[int, tuple[float, float] | None] = {}
    for n in ns:
        t_sum = u_sum = total = 0
        for ex in examples:
            title, utts = _context_parts(ex)
            t, u, k = overlap_counts(outputs.get(ex.id, ()), title, utts, n)
            t_sum, u_sum, total = t_sum + t, u_sum + u, total + k
        out[n] = (100 * t_sum / total, 100 * u_sum / total) if total else None
    return out


# --- buckets ---------------------------------------------------------------------


def reference_coverage(example: Example) -> float:
    """Percent of reference tokens that also occur in U_1..U_tg."""
    novel = novel_ngrams(example.description_tokens, _context_parts(example)[1], 1)
    return 100.0 - (novel if novel is not None else 100.0)


def decile_bucket(pct: float) -> int:
    """Upper edge of the 10-point bin holding ``pct``: [0,10) -> 10, ..., [90,100] -> 100."""
    if not 0 <= pct <= 100:
        raise ValueError("percentage must lie in [0, 100]")
    return min(100, math.floor(pct / 10) * 10 + 10)


class BucketStats(BaseModel):
    n: int
    aggregate: dict[str, float]


def bucket_report(
    per_example: Mapping[str, Mapping[str, float]],
    pct: Mapping[str, float],
    keys: Sequence[str] = METRIC_KEYS,
) -> dict[int, BucketStats]:
    """Mean metrics per decile of ``pct`` (e.g. :func:`reference_coverage`)."""
    if not per_example:
        raise ValueError("need at least one example")
    groups: dict[int, list[str]] = {}
    for ex_id in sorted(per_example):
        groups.setdefault(decile_bucket(pct[ex_id]), []).append(ex_id)
    return {
        b: BucketStats(n=len(ids), aggregate={k: math.fsum(per_example[i][k] for i in ids) / len(ids) for k in keys})
        for b, ids in sorted(groups.items())
    }


# --- when accuracy ----------------------------------------------------------------------


class WhenAccuracyTable(BaseModel):
    n: int
    pct_tp_lt_tg: float
    pct_tp_none: float
    pct_tp_eq_tg: float
    by_tg: dict[str, float | None]
    by_tg_n: dict[str, int]
    avg_lead: float | None


def tg_bucket(t_g: int) -> str:
    return str(t_g) if t_g < 5 else "≥5"


def when_accuracy(preds: Iterable, golds: Mapping[str, int]) -> WhenAccuracyTable:
    """Outcome percentages over the gold ids.

    A prediction later than t_g cannot occur under the evaluation cap; if one
    is supplied it is counted as not predicted.
    """
    by_id = {p.example_id: p.t_p for p in preds}
    missing = sorted(set(golds) - set(by_id))
    if missing:
        raise CoverageError(f"no prediction for {len(missing)} gold ids, e.g. {missing[0]}")
    n = len(golds)
    if n == 0:
        raise ValueError("no gold examples")
    lt = none = eq = 0
    leads: list[int] = []
    hits = {b: 0 for b in TG_BUCKETS}
    sizes = {b: 0 for b in TG_BUCKETS}
    for ex_id, t_g in golds.items():
        t_p = by_id[ex_id]
        b = tg_bucket(t_g)
        sizes[b] += 1
        if t_p is None or t_p > t_g:
            none += 1
            continue
        leads.append(t_g - t_p)
        if t_p < t_g:
            lt += 1
        else:
            eq += 1
            hits[b] += 1
    return WhenAccuracyTable(
        n=n,
        pct_tp_lt_tg=100 * lt / n,
        pct_tp_none=100 * none / n,
        pct_tp_eq_tg=100 * eq / n,
        by_tg={b: (100 * hits[b] / sizes[b] if sizes[b] else None) for b in TG_BUCKETS},
        by_tg_n=sizes,
        avg_lead=(sum(leads) / len(leads)) if leads else None,
    )
