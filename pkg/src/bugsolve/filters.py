"""Noise filters, time-ordered partitioning and corpus statistics.

Frozen choices:

* IWF(w) = ln(1 + N) / (1 + df(w)); a description's NIWF is the max over its
  words of the min-max normalized IWF, clamped to [0, 1]. Unseen words have
  df = 0 and therefore clamp to 1.0.
* The extractive oracle grows a sentence set greedily by the mean of
  ROUGE-1 F1 and ROUGE-2 F1 against the reference, computed exactly with
  fractions so ties are real ties. N-grams never span a sentence boundary.
"""
from __future__ import annotations

import math
import warnings
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType

from pydantic import BaseModel, Field, model_validator

from bugsolve.corpus import CorpusSplit, Example, Record
from bugsolve.metrics import ngrams
from bugsolve.stopwords import STOPWORDS

DEFAULT_NIWF_THRESHOLD = 0.116
DEFAULT_OVERLAP_THRESHOLD = 0.5
FILTER_ORDER = ("generic", "uninformative", "insufficient")


class ConfigurationError(ValueError):
    pass


class DegenerateInputError(ValueError):
    pass


class SplitError(ValueError):
    pass


class TimeOrderWarning(UserWarning):
    pass


class OraclePick(Record):
    u: int = Field(ge=1)
    s: int = Field(ge=0)


class FilterReport(Record):
    """Scores and verdicts for one example; ``oracle`` picks use 1-based
    utterance index ``u`` and 0-based sentence index ``s``."""

    example_id: str = Field(alias="id")
    niwf_score: float = Field(alias="niwf", ge=0.0, le=1.0)
    title_overlap: float = Field(alias="overlap", ge=0.0, le=1.0)
    oracle_sentences: tuple[OraclePick, ...] = Field(alias="oracle")
    verdict_generic: bool = Field(alias="generic")
    verdict_uninformative: bool = Field(alias="uninformative")
    verdict_insufficient: bool = Field(alias="insufficient")
    kept: bool

    @model_validator(mode="after")
    def _consistent(self) -> FilterReport:
        if self.verdict_insufficient != (not self.oracle_sentences):
            raise ValueError("insufficient verdict must equal empty oracle selection")
        if self.kept != (not (self.verdict_generic or self.verdict_uninformative or self.verdict_insufficient)):
            raise ValueError("kept must be the negation of any verdict")
        return self

    @property
    def first_failing(self) -> str | None:
        for name in FILTER_ORDER:
            if getattr(self, f"verdict_{name}"):
                return name
        return None


# --- NIWF ------------------------------------------------------------------


@dataclass(frozen=True)
class IwfTable:
    doc_count: int
    doc_freq: Mapping[str, int]
    min_iwf: float
    max_iwf: float

    def iwf(self, word: str) -> float:
        return math.log(1 + self.doc_count) / (1 + self.doc_freq.get(word, 0))

    def normalized(self, word: str) -> float:
        span = self.max_iwf - self.min_iwf
        if word not in self.doc_freq:
            return 1.0
        if span <= 0:
            return 0.0
        return min(1.0, max(0.0, (self.iwf(word) - self.min_iwf) / span))


def build_iwf_table(train_descriptions: Iterable[Sequence[str]]) -> IwfTable:
    docs = [set(d) for d in train_descriptions]
    if not docs:
        raise ConfigurationError("IWF table needs at least one training description")
    df: Counter = Counter()
    for d in docs:
        df.update(d)
    n = len(docs)
    if not df:
        raise ConfigurationError("training descriptions contain no tokens")
    top = math.log(1 + n)
    values = [top / (1 + c) for c in df.values()]
    return IwfTable(n, MappingProxyType(dict(df)), min(values), max(values))


def niwf(description: Sequence[str], table: IwfTable) -> float:
    if not description:
        raise ValueError("description must be non-empty")
    return max(table.normalized(w) for w in description)


def niwf_threshold(train_scores: Sequence[float], percentile: float = 0.10) -> float:
    """Nearest-rank percentile: element ceil(p * n) (1-based) of the sorted scores."""
    if not 0 < percentile < 1:
        raise ValueError("percentile must lie in (0, 1)")
    if not train_scores:
        raise ValueError("need at least one score")
    ordered = sorted(train_scores)
    rank = math.ceil(Fraction(str(percentile)) * len(ordered))
    return ordered[max(rank, 1) - 1]


# --- title overlap -----------------------------------------------------------


def title_overlap(description: Sequence[str], title: Sequence[str], stopwords: frozenset[str] = STOPWORDS) -> float:
    uniq = {t for t in description if t not in stopwords}
    if not uniq:
        raise DegenerateInputError("description has no non-stopword tokens")
    return len(uniq & set(title)) / len(uniq)


# --- greedy extractive oracle ---------------------------------------------------


def _f1(overlap: int, hyp_total: int, ref_total: int) -> Fraction:
    if hyp_total + ref_total == 0 or overlap == 0:
        return Fraction(0)
    return Fraction(2 * overlap, hyp_total + ref_total)


def greedy_extractive_oracle(sentences: Sequence[Sequence[str]], reference: Sequence[str]) -> list[int]:
    """Indices of greedily selected sentences, in selection order.

    Each round adds the sentence with the largest strictly positive gain in
    mean(ROUGE-1 F1, ROUGE-2 F1); ties go to the earliest sentence.
    """
    ref1, ref2 = ngrams(reference, 1), ngrams(reference, 2)
    r1_total, r2_total = sum(ref1.values()), sum(ref2.values())
    cand1 = [ngrams(s, 1) for s in sentences]
    cand2 = [ngrams(s, 2) for s in sentences]
    sel1: Counter = Counter()
    sel2: Counter = Counter()
    chosen: list[int] = []
    current = Fraction(0)
    remaining = list(range(len(sentences)))
    while remaining:
        best_idx, best_score = -1, current
        for i in remaining:
            u1, u2 = sel1 + cand1[i], sel2 + cand2[i]
            score = (
                _f1(sum((u1 & ref1).values()), sum(u1.values()), r1_total)
                + _f1(sum((u2 & ref2).values()), sum(u2.values()), r2_total)
            ) / 2
            if score > best_score:
                best_idx, best_score = i, score
        if best_idx < 0:
            break
        chosen.append(best_idx)
        remaining.remove(best_idx)
        sel1 += cand1[best_idx]
        sel2 += cand2[best_idx]
        current = best_score
    return chosen


def discussion_sentences(example: Example, upto_t: int | None = None) -> list[tuple[int, int, tuple[str, ...]]]:
    """(utterance t, sentence index, tokens) for U_1..U_upto_t (default t_g)."""
    upto = example.t_g if upto_t is None else upto_t
    out = []
    for utt in example.utterances[:upto]:
        for s_idx, toks in enumerate(utt.sentence_tokens()):
            out.append((utt.index_t, s_idx, toks))
    return out


def oracle_picks(example: Example, upto_t: int | None = None) -> list[OraclePick]:
    sents = discussion_sentences(example, upto_t)
    chosen = greedy_extractive_oracle([s[2] for s in sents], example.description_tokens)
    return [OraclePick(u=sents[i][0], s=sents[i][1]) for i in chosen]


# --- filtering ------------------------------------------------------------------


def filter_report(
    example: Example,
    table: IwfTable,
    niwf_t: float = DEFAULT_NIWF_THRESHOLD,
    overlap_t: float = DEFAULT_OVERLAP_THRESHOLD,
    stopwords: frozenset[str] = STOPWORDS,
) -> FilterReport:
    score = niwf(example.description_tokens, table)
    overlap = title_overlap(example.description_tokens, example.title_tokens, stopwords)
    picks = oracle_picks(example)
    generic = score < niwf_t
    uninformative = overlap >= overlap_t
    insufficient = not picks
    return FilterReport(
        example_id=example.id,
        niwf_score=score,
        title_overlap=overlap,
        oracle_sentences=tuple(picks),
        verdict_generic=generic,
        verdict_uninformative=uninformative,
        verdict_insufficient=insufficient,
        kept=not (generic or uninformative or insufficient),
    )


def apply_filters(
    corpus: Sequence[Example],
    table: IwfTable,
    niwf_t: float = DEFAULT_NIWF_THRESHOLD,
    overlap_t: float = DEFAULT_OVERLAP_THRESHOLD,
    stopwords: frozenset[str] = STOPWORDS,
    threads: int = 1,
) -> tuple[list[FilterReport], list[Example]]:
    """All three scores for every example plus the kept subset, both id-sorted."""
    ordered = sorted(corpus, key=lambda e: e.id)

    def run(ex: Example) -> FilterReport:
        return filter_report(ex, table, niwf_t, overlap_t, stopwords)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(run, ordered))
    else:
        reports = [run(ex) for ex in ordered]
    kept = [ex for ex, rep in zip(ordered, reports) if rep.kept]
    return reports, kept


def drop_accounting(reports: Iterable[FilterReport]) -> dict[str, int]:
    """Drops attributed to the first failing filter, in generic → uninformative
    → insufficient order, plus the kept count."""
    counts = {name: 0 for name in FILTER_ORDER}
    counts["kept"] = 0
    for rep in reports:
        counts[rep.first_failing or "kept"] += 1
    return counts


# --- partitioning -------------------------------------------------------------------


def split_by_time(corpus: Sequence[Example], fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)) -> CorpusSplit:
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise SplitError("fractions must be three positive numbers summing to 1")
    n = len(corpus)
    if n < 3:
        raise SplitError(f"need at least 3 examples to split, got {n}")
    ordered = sorted(corpus, key=lambda e: (e.resolution_timestamp, e.id))
    n_train = math.floor(Fraction(str(fractions[0])) * n)
    n_valid = math.floor(Fraction(str(fractions[1])) * n)
    train, valid, test = ordered[:n_train], ordered[n_train : n_train + n_valid], ordered[n_train + n_valid :]
    for earlier, later, name in ((train, valid, "train/valid"), (valid, test, "valid/test"), (train, test, "train/test")):
        if earlier and later and max(e.resolution_timestamp for e in earlier) >= min(e.resolution_timestamp for e in later):
            warnings.warn(f"{name} boundary shares a timestamp; ordering is non-strict", TimeOrderWarning, stacklevel=2)
    return CorpusSplit(
        train=tuple(e.id for e in train), valid=tuple(e.id for e in valid), test=tuple(e.id for e in test)
    )


def partition(corpus: Sequence[Example], split: CorpusSplit) -> dict[str, list[Example]]:
    by_id = {e.id: e for e in corpus}
    return {
        name: [by_id[i] for i in getattr(split, name) if i in by_id] for name in ("train", "valid", "test")
    }


# --- statistics ----------------------------------------------------------------------


class CorpusStats(BaseModel):
    n_projects: int
    n_examples: int
    n_commit_messages: int
    n_pr_titles: int
    avg_T: float
    avg_t_g: float
    avg_utterance_len: float
    avg_title_len: float
    avg_description_len: float


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values) if values else 0.0


def stats_for(examples: Sequence[Example]) -> CorpusStats:
    """Averages per example, except utterance length which pools all utterances."""
    return CorpusStats(
        n_projects=len({e.project for e in examples}),
        n_examples=len(examples),
        n_commit_messages=sum(e.description_source == "commit_message" for e in examples),
        n_pr_titles=sum(e.description_source == "pr_title" for e in examples),
        avg_T=_mean([e.T for e in examples]),
        avg_t_g=_mean([e.t_g for e in examples]),
        avg_utterance_len=_mean([len(u.tokens) for e in examples for u in e.utterances]),
        avg_title_len=_mean([len(e.title_tokens) for e in examples]),
        avg_description_len=_mean([len(e.description_tokens) for e in examples]),
    )


def corpus_stats(corpus: Sequence[Example], split: CorpusSplit | None = None) -> dict[str, CorpusStats]:
    out: dict[str, CorpusStats] = {}
    if split is not None:
        for name, part in partition(corpus, split).items():
            out[name] = stats_for(part)
    out["total"] = stats_for(corpus)
    return out
