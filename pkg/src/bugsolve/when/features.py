"""Step instances and their features for the when-to-generate classifier."""
from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from bugsolve.corpus import Example, RawTimeline, Utterance
from bugsolve.preprocess import BoundsError, strip_markup, tokenize
from bugsolve.tfidf import SparseVec, TfidfModel

SCALAR_FEATURES = ("position_t", "len_ut", "author_index", "author_freq", "len_ratio", "title_len")
FIXED_CLASS_WEIGHTS = (1.543, 0.740)


class DiscussionLike(Protocol):
    id: str
    title_tokens: tuple[str, ...]
    utterances: tuple[Utterance, ...]


@dataclass(frozen=True)
class Discussion:
    """A title plus turns with no solution event (non-bug augmentation data)."""

    id: str
    title_tokens: tuple[str, ...]
    utterances: tuple[Utterance, ...]

    @classmethod
    def from_timeline(cls, timeline: RawTimeline) -> Discussion:
        from bugsolve.ingest.extract import discussion_utterances

        return cls(timeline.key, tuple(tokenize(strip_markup(timeline.title_raw))), tuple(discussion_utterances(timeline)))


@dataclass(frozen=True)
class FeatureVector:
    tfidf_title: SparseVec
    tfidf_ut: SparseVec
    tfidf_agg: SparseVec
    position_t: int
    len_ut: int
    author_index: int
    author_freq: float
    len_ratio: float
    title_len: int


@dataclass(frozen=True)
class StepInstance:
    example_id: str
    t: int
    label: bool
    weight: float
    features: FeatureVector


class WhenFeaturizer:
    """Fixed TF-IDF vocabulary plus the scalar turn features.

    The vocabulary is fit once on training titles and utterances; the
    mapping is read-only afterwards.
    """

    def __init__(self, model: TfidfModel):
        self.model = model
        self.vocab = model.vocabulary()
        self._col = {w: i for i, w in enumerate(self.vocab)}

    @classmethod
    def fit(cls, discussions: Iterable[DiscussionLike], max_vocab: int | None = 300) -> WhenFeaturizer:
        docs: list[Sequence[str]] = []
        for d in discussions:
            docs.append(d.title_tokens)
            docs.extend(u.tokens for u in d.utterances)
        return cls(TfidfModel.fit(docs, max_vocab=max_vocab))

    @property
    def dim(self) -> int:
        return 3 * len(self.vocab) + len(SCALAR_FEATURES)

    def feature_names(self) -> list[str]:
        names = [f"{group}:{w}" for group in ("title", "ut", "agg") for w in self.vocab]
        return names + list(SCALAR_FEATURES)

    def featurize(self, discussion: DiscussionLike, t: int) -> FeatureVector:
        utts = discussion.utterances
        if not 1 <= t <= len(utts):
            raise BoundsError(f"t={t} outside [1, {len(utts)}]")
        seen = utts[:t]
        current = seen[-1]
        authors: list[str] = []
        for u in seen:
            if u.author not in authors:
                authors.append(u.author)
        total_len = sum(len(u.tokens) for u in seen)
        return FeatureVector(
            tfidf_title=self.model.transform(discussion.title_tokens),
            tfidf_ut=self.model.transform(current.tokens),
            tfidf_agg=self.model.transform([tok for u in seen for tok in u.tokens]),
            position_t=t,
            len_ut=len(current.tokens),
            author_index=authors.index(current.author) + 1,
            author_freq=sum(u.author == current.author for u in seen) / t,
            len_ratio=len(current.tokens) / total_len,
            title_len=len(discussion.title_tokens),
        )

    def to_array(self, fv: FeatureVector) -> np.ndarray:
        v = len(self.vocab)
        row = np.zeros(self.dim)
        for offset, vec in ((0, fv.tfidf_title), (v, fv.tfidf_ut), (2 * v, fv.tfidf_agg)):
            for w, val in vec.items():
                row[offset + self._col[w]] = val
        row[3 * v :] = [fv.position_t, fv.len_ut, fv.author_index, fv.author_freq, fv.len_ratio, fv.title_len]
        return row

    def matrix(self, instances: Sequence[StepInstance]) -> np.ndarray:
        if not instances:
            return np.zeros((0, self.dim))
        return np.vstack([self.to_array(i.features) for i in instances])


def make_instances(
    corpus: Sequence[Example],
    augmentation: Sequence[DiscussionLike] = (),
    aug_weight: float = 0.7,
    featurizer: WhenFeaturizer | None = None,
) -> list[StepInstance]:
    """Bug examples give steps 1..t_g with the positive at t_g; augmentation
    discussions give all-negative steps weighted ``aug_weight``.

    Class weights are not folded in here; training applies them on top.
    """
    if not corpus:
        raise ValueError("corpus must be non-empty")
    if featurizer is None:
        featurizer = WhenFeaturizer.fit([*corpus, *augmentation])
    out: list[StepInstance] = []
    for ex in corpus:
        t_g = getattr(ex, "t_g", None)
        if not t_g:
            raise ValueError(f"{ex.id}: bug example without t_g")
        for t in range(1, t_g + 1):
            out.append(StepInstance(ex.id, t, t == t_g, 1.0, featurizer.featurize(ex, t)))
    for disc in augmentation:
        for t in range(1, len(disc.utterances) + 1):
            out.append(StepInstance(disc.id, t, False, aug_weight, featurizer.featurize(disc, t)))
    return out


def balanced_class_weights(labels: Sequence[bool]) -> tuple[float, float]:
    """Inverse class proportion, n / (2 * n_class), as (w_pos, w_neg)."""
    n = len(labels)
    n_pos = sum(bool(y) for y in labels)
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present")
    return n / (2 * n_pos), n / (2 * n_neg)
