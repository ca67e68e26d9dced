"""Combined system: choose t_p with a classifier, then generate from U_1..U_tp."""
from __future__ import annotations

from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Literal, TypeVar

from pydantic import BaseModel, ConfigDict, Field

from bugsolve.corpus import Example
from bugsolve.filters import ConfigurationError
from bugsolve.generators import GeneratorOutput, GeneratorSpec, context_at, make_generator
from bugsolve.metrics import METRIC_KEYS, MetricReport, score_corpus
from bugsolve.significance import DEFAULT_ALPHA, DEFAULT_SAMPLE_SIZE, DEFAULT_SAMPLES, BootstrapResult, bootstrap_compare
from bugsolve.when.forest import ForestModel
from bugsolve.when.predict import WhenPrediction, baseline_first, baseline_random, baseline_second, infer_tp

Classifier = Literal["forest", "first", "second", "rand_uniform", "rand_dist", "gold_oracle"]
Predictor = Callable[[Example], WhenPrediction]

T = TypeVar("T")
R = TypeVar("R")


class PipelineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    classifier: Classifier = "forest"
    generator: GeneratorSpec = GeneratorSpec()
    threshold: float = 0.5
    seed: int = 0
    cap: Literal["tg", "T"] = "tg"
    p_pos: float | None = Field(default=None, gt=0, le=1)


def generator_name(spec: GeneratorSpec) -> str:
    m = spec.method
    if m == "lead":
        return f"lead{spec.k}-{spec.source}"
    if m == "last":
        return f"last{spec.k}-{spec.source}"
    if m == "full-utterance":
        return f"full-{spec.source}"
    if m == "retrieval":
        return f"retrieval-title-{spec.retrieval_field}-{spec.retrieval_scope}"
    return m


def make_predictor(cfg: PipelineConfig, model: ForestModel | None = None) -> Predictor:
    c = cfg.classifier
    if c == "forest":
        if model is None or model.featurizer is None:
            raise ConfigurationError("forest classifier needs a trained model with its featurizer")
        return lambda ex: infer_tp(model, ex, cfg.threshold, cap=cfg.cap)
    if c == "first":
        return baseline_first
    if c == "second":
        return lambda ex: baseline_second(ex, cap=cfg.cap)
    if c in ("rand_uniform", "rand_dist"):
        mode = "uniform" if c == "rand_uniform" else "dist"
        return lambda ex: baseline_random(ex, mode, cfg.p_pos, cfg.seed, cap=cfg.cap)
    if c == "gold_oracle":
        return lambda ex: WhenPrediction(example_id=ex.id, t_p=ex.t_g, probs=(0.0,) * (ex.t_g - 1) + (1.0,))
    raise ConfigurationError(f"unknown classifier {c!r}")


def pmap(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> list[R]:
    """Order-preserving map, optionally on a thread pool."""
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


class Pipeline:
    """Resolved classifier and generator; both are built up front so missing
    resources fail before any example runs."""

    def __init__(
        self,
        cfg: PipelineConfig,
        model: ForestModel | None = None,
        train: Sequence[Example] | None = None,
        predictor: Predictor | None = None,
    ):
        self.cfg = cfg
        self.predict = predictor or make_predictor(cfg, model)
        self.generate = make_generator(cfg.generator, train)
        self.name = generator_name(cfg.generator)

    def at_step(self, example: Example, t: int | None) -> GeneratorOutput:
        if t is None:
            return GeneratorOutput(example_id=example.id, generator=self.name, tokens=(), at_step=None)
        return self.generate(context_at(example, t), example.description_tokens)

    def run(self, example: Example) -> tuple[WhenPrediction, GeneratorOutput]:
        pred = self.predict(example)
        return pred, self.at_step(example, pred.t_p)


def run_pipeline(
    example: Example,
    cfg: PipelineConfig,
    model: ForestModel | None = None,
    train: Sequence[Example] | None = None,
    predictor: Predictor | None = None,
) -> GeneratorOutput:
    return Pipeline(cfg, model, train, predictor).run(example)[1]


def run_corpus(
    corpus: Sequence[Example], pipeline: Pipeline, threads: int = 1
) -> tuple[list[WhenPrediction], list[GeneratorOutput]]:
    ordered = sorted(corpus, key=lambda e: e.id)
    pairs = pmap(pipeline.run, ordered, threads)
    return [p for p, _ in pairs], [o for _, o in pairs]


class PipelineReport(BaseModel):
    at_tp: MetricReport
    at_tg: MetricReport
    significance: dict[str, BootstrapResult]
    predictions: list[WhenPrediction]
    outputs_tp: list[GeneratorOutput]
    outputs_tg: list[GeneratorOutput]


def evaluate_pipeline(
    corpus: Sequence[Example],
    cfg: PipelineConfig,
    model: ForestModel | None = None,
    train: Sequence[Example] | None = None,
    predictor: Predictor | None = None,
    threads: int = 1,
    samples: int = DEFAULT_SAMPLES,
    sample_size: int = DEFAULT_SAMPLE_SIZE,
    alpha: float = DEFAULT_ALPHA,
    keys: Sequence[str] = METRIC_KEYS,
) -> PipelineReport:
    """Score the pipeline output and the same generator forced to t_g on the
    same examples, with a paired bootstrap per metric."""
    pipe = Pipeline(cfg, model, train, predictor)
    ordered = sorted(corpus, key=lambda e: e.id)
    preds, out_tp = run_corpus(ordered, pipe, threads)
    out_tg = pmap(lambda ex: pipe.at_step(ex, ex.t_g), ordered, threads)
    refs = {e.id: e.description_tokens for e in ordered}
    rep_tp = score_corpus({o.example_id: o.tokens for o in out_tp}, refs, keys)
    rep_tg = score_corpus({o.example_id: o.tokens for o in out_tg}, refs, keys)
    ids = sorted(refs)
    sig = {
        k: bootstrap_compare(
            [rep_tp.per_example[i][k] for i in ids],
            [rep_tg.per_example[i][k] for i in ids],
            samples,
            sample_size,
            alpha,
            cfg.seed,
            threads,
        )
        for k in keys
    } if ids else {}
    return PipelineReport(
        at_tp=rep_tp, at_tg=rep_tg, significance=sig, predictions=preds, outputs_tp=out_tp, outputs_tg=out_tg
    )
