"""Non-neural description generators.

Generators never see an Example directly: they receive a ``Context`` holding
the title and only the utterances U_1..U_t, so nothing past the chosen step
can leak into the output.
"""
from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from bugsolve.corpus import Example, Record, Utterance
from bugsolve.filters import ConfigurationError, greedy_extractive_oracle
from bugsolve.preprocess import BoundsError
from bugsolve.tfidf import SparseVec, TfidfModel, cosine


class GeneratorOutput(Record):
    example_id: str = Field(alias="id")
    generator: str
    tokens: tuple[str, ...]
    at_step: int | None = Field(default=None, ge=1)


@dataclass(frozen=True)
class Context:
    example_id: str
    project: str
    title_tokens: tuple[str, ...]
    utterances: tuple[Utterance, ...]

    @property
    def at_step(self) -> int:
        return len(self.utterances)

    def sentences(self) -> list[tuple[str, ...]]:
        return [s for u in self.utterances for s in u.sentence_tokens()]


def context_at(example: Example, t: int | None = None) -> Context:
    """Truncated view of ``example`` holding U_1..U_t (default t_g)."""
    t = example.t_g if t is None else t
    if not 1 <= t <= example.T:
        raise BoundsError(f"t={t} outside [1, {example.T}]")
    return Context(example.id, example.project, example.title_tokens, example.utterances[:t])


def _ctx(x: Example | Context) -> Context:
    return context_at(x) if isinstance(x, Example) else x


def _output(ctx: Context, name: str, tokens: Sequence[str]) -> GeneratorOutput:
    return GeneratorOutput(example_id=ctx.example_id, generator=name, tokens=tuple(tokens), at_step=ctx.at_step)


def copy_title(example: Example | Context) -> GeneratorOutput:
    ctx = _ctx(example)
    return _output(ctx, "copy-title", ctx.title_tokens)


Source = Literal["u1", "utg"]
Span = Literal["full", "lead_k", "last_k"]


def extract_span(example: Example | Context, source: Source = "utg", span: Span = "lead_k", k: int = 1) -> GeneratorOutput:
    """Whole utterance, first k or last k sentences of U_1 or of the last
    available utterance (U_tg at the gold step, U_tp in the pipeline)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ctx = _ctx(example)
    utt = ctx.utterances[0] if source == "u1" else ctx.utterances[-1]
    sents = utt.sentence_tokens()
    if span == "full":
        picked, name = sents, f"full-{source}"
    elif span == "lead_k":
        picked, name = sents[:k], f"lead{k}-{source}"
    else:
        picked, name = sents[-k:], f"last{k}-{source}"
    return _output(ctx, name, [t for s in picked for t in s])


# --- LexRank ----------------------------------------------------------------


def lexrank_scores(
    sentences: Sequence[Sequence[str]],
    threshold: float = 0.1,
    damping: float = 0.85,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> list[float]:
    """Stationary centrality on the thresholded cosine graph.

    Edges join distinct sentences whose TF-IDF cosine (idf over this
    sentence pool) reaches ``threshold``. Rows are normalized by degree;
    a node with no edges spreads its mass uniformly.
    """
    n = len(sentences)
    if n == 0:
        return []
    model = TfidfModel.fit(sentences)
    vecs = [model.transform(s) for s in sentences]
    adj = [[j for j in range(n) if j != i and vecs[i] and vecs[j] and cosine(vecs[i], vecs[j]) >= threshold] for i in range(n)]
    p = [1.0 / n] * n
    base = (1 - damping) / n
    for _ in range(max_iter):
        nxt = [base] * n
        dangling = sum(p[i] for i in range(n) if not adj[i])
        for i in range(n):
            if adj[i]:
                share = damping * p[i] / len(adj[i])
                for j in adj[i]:
                    nxt[j] += share
        spread = damping * dangling / n
        nxt = [v + spread for v in nxt]
        delta = max(abs(a - b) for a, b in zip(nxt, p))
        p = nxt
        if delta < tol:
            break
    total = sum(p)
    return [v / total for v in p]


def lexrank(
    example: Example | Context,
    threshold: float = 0.1,
    n_extract: int = 1,
    damping: float = 0.85,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> GeneratorOutput:
    ctx = _ctx(example)
    sents = ctx.sentences()
    scores = lexrank_scores(sents, threshold, damping, tol, max_iter)
    ranked = sorted(range(len(sents)), key=lambda i: (-round(scores[i], 12), i))[:n_extract]
    return _output(ctx, "lexrank", [t for i in sorted(ranked) for t in sents[i]])


# --- retrieval ---------------------------------------------------------------------


@dataclass(frozen=True)
class TfidfIndex:
    field: Literal["title", "description"]
    scope: Literal["global", "project"]
    model: TfidfModel
    vectors: Mapping[str, SparseVec]
    timestamps: Mapping[str, int]
    projects: Mapping[str, str]
    descriptions: Mapping[str, tuple[str, ...]]

    @property
    def idf(self) -> Mapping[str, float]:
        return self.model.idf

    def __len__(self) -> int:
        return len(self.vectors)


def build_tfidf_index(
    train: Sequence[Example], field: Literal["title", "description"] = "title", scope: Literal["global", "project"] = "global"
) -> TfidfIndex:
    """One vector per training example; idf is computed over the whole
    training set in both scopes, and project scope restricts candidates."""
    if not train:
        raise ConfigurationError("retrieval index needs a non-empty training set")
    docs = {e.id: (e.title_tokens if field == "title" else e.description_tokens) for e in train}
    model = TfidfModel.fit(docs.values())
    return TfidfIndex(
        field=field,
        scope=scope,
        model=model,
        vectors={i: model.transform(d) for i, d in docs.items()},
        timestamps={e.id: e.resolution_timestamp for e in train},
        projects={e.id: e.project for e in train},
        descriptions={e.id: e.description_tokens for e in train},
    )


def nearest(query_title: Sequence[str], index: TfidfIndex, project: str | None = None) -> str:
    """Id of the max-cosine training example; ties go to the earliest timestamp."""
    candidates = list(index.vectors)
    if index.scope == "project" and project is not None:
        same = [i for i in candidates if index.projects[i] == project]
        candidates = same or candidates
    q = index.model.transform(query_title)
    return min(candidates, key=lambda i: (-cosine(q, index.vectors[i]), index.timestamps[i], i))


def retrieve(example: Example | Context, index: TfidfIndex) -> GeneratorOutput:
    ctx = _ctx(example)
    hit = nearest(ctx.title_tokens, index, ctx.project)
    name = f"retrieval-title-{'title' if index.field == 'title' else 'desc'}-{index.scope}"
    return _output(ctx, name, index.descriptions[hit])


def oracle_extractive(example: Example | Context, reference: Sequence[str] | None = None) -> GeneratorOutput:
    """Greedy-oracle sentences, in selection order. Uses the gold reference,
    so it is a diagnostic upper bound, not a deployable generator."""
    if reference is None:
        if not isinstance(example, Example):
            raise ValueError("oracle_extractive on a Context needs the reference")
        reference = example.description_tokens
    ctx = _ctx(example)
    sents = ctx.sentences()
    chosen = greedy_extractive_oracle(sents, reference)
    return _output(ctx, "oracle-extractive", [t for i in chosen for t in sents[i]])


# --- generator specs ----------------------------------------------------------------------

Method = Literal["copy-title", "lead", "last", "full-utterance", "lexrank", "retrieval", "oracle-extractive"]


class GeneratorSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    method: Method = "copy-title"
    source: Source = "utg"
    k: int = Field(default=1, ge=1)
    retrieval_field: Literal["title", "desc"] = "title"
    retrieval_scope: Literal["global", "project"] = "global"
    lexrank_threshold: float = 0.1
    lexrank_damping: float = 0.85
    n_extract: int = Field(default=1, ge=1)


GenerateFn = Callable[[Context, Sequence[str]], GeneratorOutput]


def make_generator(spec: GeneratorSpec, train: Sequence[Example] | None = None) -> GenerateFn:
    """Resolve a spec to ``fn(context, reference) -> GeneratorOutput``.

    Resources (the retrieval index) are built here so a missing training
    set fails before any example is processed. ``reference`` is only read by
    the oracle-extractive generator.
    """
    m = spec.method
    if m == "copy-title":
        return lambda ctx, ref: copy_title(ctx)
    if m == "lead":
        return lambda ctx, ref: extract_span(ctx, spec.source, "lead_k", spec.k)
    if m == "last":
        return lambda ctx, ref: extract_span(ctx, spec.source, "last_k", spec.k)
    if m == "full-utterance":
        return lambda ctx, ref: extract_span(ctx, spec.source, "full", spec.k)
    if m == "lexrank":
        return lambda ctx, ref: lexrank(ctx, spec.lexrank_threshold, spec.n_extract, spec.lexrank_damping)
    if m == "retrieval":
        if not train:
            raise ConfigurationError("retrieval generator needs a training corpus")
        index = build_tfidf_index(train, "title" if spec.retrieval_field == "title" else "description", spec.retrieval_scope)
        return lambda ctx, ref: retrieve(ctx, index)
    if m == "oracle-extractive":
        return lambda ctx, ref: oracle_extractive(ctx, ref)
    raise ConfigurationError(f"unknown generator method {m!r}")
