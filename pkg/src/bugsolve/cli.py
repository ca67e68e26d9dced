"""Command-line entry point.

Exit status: 0 on success, 1 on usage or validation errors, 2 on I/O errors.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from collections.abc import Sequence

from bugsolve import analysis, tables
from bugsolve.config import Settings, load_settings
from bugsolve.corpus import (
    CorpusError,
    CorpusIOError,
    Example,
    read_jsonl,
    read_split,
    write_jsonl,
)
from bugsolve.filters import (
    DEFAULT_NIWF_THRESHOLD,
    ConfigurationError,
    apply_filters,
    build_iwf_table,
    corpus_stats,
    drop_accounting,
    niwf,
    niwf_threshold,
    partition,
    split_by_time,
)
from bugsolve.generators import GeneratorOutput, GeneratorSpec, context_at, make_generator
from bugsolve.ingest import GitHubError, extract_all, fetch_issue, reject_histogram
from bugsolve.metrics import score_corpus
from bugsolve.pipeline import Pipeline, PipelineConfig, evaluate_pipeline, generator_name, pmap
from bugsolve.preprocess import BoundsError
from bugsolve.significance import bootstrap_compare
from bugsolve.stopwords import STOPWORDS
from bugsolve.when import Discussion, ForestConfig, load_model, save_model, train_when_model
from bugsolve.when.forest import ModelFormatError, TrainingError

METRIC_ALIASES = {"bleu4": "bleu4", "meteor": "meteor", "rouge1": "rouge1_f", "rouge2": "rouge2_f", "rougel": "rougeL_f"}
CLASSIFIERS = ("forest", "first", "second", "rand_uniform", "rand_dist", "gold_oracle")
METHODS = ("copy-title", "lead", "last", "full-utterance", "lexrank", "retrieval", "oracle-extractive")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _dump_json(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise CorpusIOError(path, exc.strerror or str(exc)) from exc


def _write_text(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise CorpusIOError(path, exc.strerror or str(exc)) from exc


def _examples(path: str) -> list[Example]:
    return read_jsonl(path, "example")


def _parts(args) -> tuple[list[Example], list[Example] | None]:
    """(target examples, training pool) from --corpus/--split/--part/--train."""
    corpus = _examples(args.corpus)
    train = None
    if getattr(args, "split", None):
        split = read_split(args.split)
        parts = partition(corpus, split)
        target, train = parts[args.part], parts["train"]
    else:
        target = corpus
    if getattr(args, "train", None):
        train = _examples(args.train)
    return sorted(target, key=lambda e: e.id), train


def _gen_spec(args, settings: Settings) -> GeneratorSpec:
    return GeneratorSpec(
        method=args.method,
        source=args.source,
        k=args.k,
        retrieval_field=args.retrieval_field,
        retrieval_scope=args.retrieval_scope,
        lexrank_threshold=settings.lexrank_threshold,
        lexrank_damping=settings.lexrank_damping,
        n_extract=args.n_extract,
    )


# --- commands ------------------------------------------------------------------


def cmd_ingest(args, settings: Settings) -> int:
    timelines = read_jsonl(args.timelines, "timeline")
    examples, rejects = extract_all(timelines, threads=args.threads)
    write_jsonl(examples, args.out)
    if args.rejects:
        write_jsonl(rejects, args.rejects)
    print(f"examples: {len(examples)}")
    for code, count in sorted(reject_histogram(rejects).items()):
        print(f"rejected {code}: {count}")
    return 0


def cmd_fetch(args, settings: Settings) -> int:
    timelines = [fetch_issue(args.project, n, host=args.host) for n in args.issue]
    write_jsonl(timelines, args.out)
    print(f"timelines: {len(timelines)}")
    return 0


def cmd_filter(args, settings: Settings) -> int:
    corpus = _examples(args.corpus)
    if args.split:
        train = partition(corpus, read_split(args.split))["train"]
    elif len(corpus) >= 3:
        train = partition(corpus, split_by_time(corpus, settings.split_fractions))["train"]
    else:
        train = []
    table = build_iwf_table(e.description_tokens for e in (train or corpus))
    if settings.niwf_threshold is not None:
        niwf_t = settings.niwf_threshold
    elif not train:
        # too small to split: fall back to the fixed operating point
        niwf_t = DEFAULT_NIWF_THRESHOLD
    else:
        niwf_t = niwf_threshold([niwf(e.description_tokens, table) for e in train], settings.niwf_percentile)
    reports, kept = apply_filters(corpus, table, niwf_t, settings.overlap_threshold, threads=args.threads)
    write_jsonl(kept, args.out)
    if args.reports:
        write_jsonl(reports, args.reports)
    print(f"niwf_threshold: {niwf_t:.6f}")
    for name, count in drop_accounting(reports).items():
        print(f"{name}: {count}")
    return 0


def cmd_split(args, settings: Settings) -> int:
    corpus = _examples(args.corpus)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        split = split_by_time(corpus, settings.split_fractions)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_jsonl([split], args.out)
    print(f"train: {len(split.train)}  valid: {len(split.valid)}  test: {len(split.test)}")
    return 0


def cmd_stats(args, settings: Settings) -> int:
    corpus = _examples(args.corpus)
    split = read_split(args.split) if args.split else None
    full = corpus_stats(corpus, split)
    filtered = corpus_stats(_examples(args.filtered), split) if args.filtered else None
    if args.json:
        payload = {"full": {k: v.model_dump() for k, v in full.items()}}
        if filtered:
            payload["filtered"] = {k: v.model_dump() for k, v in filtered.items()}
        _dump_json(payload, args.json)
    _write_text(tables.stats_table(full, filtered), None)
    return 0


def cmd_gen(args, settings: Settings) -> int:
    target, train = _parts(args)
    fn = make_generator(_gen_spec(args, settings), train)
    if args.at == "tp":
        if not args.pred:
            raise ConfigurationError("--at tp needs --pred")
        steps = {p.example_id: p.t_p for p in read_jsonl(args.pred, "when_prediction")}
        missing = [e.id for e in target if e.id not in steps]
        if missing:
            raise ConfigurationError(f"no prediction for {missing[0]}")
    spec_name = generator_name(_gen_spec(args, settings))

    def one(ex: Example) -> GeneratorOutput:
        if args.at == "tg":
            t = ex.t_g
        elif args.at == "tp":
            t = steps[ex.id]
        else:
            t = int(args.at)
        if t is None:
            return GeneratorOutput(example_id=ex.id, generator=spec_name, tokens=(), at_step=None)
        return fn(context_at(ex, t), ex.description_tokens)

    outputs = pmap(one, target, args.threads)
    write_jsonl(outputs, args.out)
    print(f"outputs: {len(outputs)}")
    return 0


def cmd_train_when(args, settings: Settings) -> int:
    corpus = _examples(args.train)
    if args.split:
        corpus = partition(corpus, read_split(args.split))["train"]
    aug = [Discussion.from_timeline(t) for t in read_jsonl(args.aug, "timeline")] if args.aug else []
    aug = [d for d in aug if d.utterances]
    cfg = ForestConfig(
        n_trees=settings.rf_trees, seed=settings.rf_seed, class_weight=settings.forest_class_weight(), threads=args.threads
    )
    model = train_when_model(corpus, aug, cfg, settings.aug_weight, args.max_vocab)
    save_model(model, args.out)
    print(f"trees: {model.n_trees}  features: {model.n_features}")
    return 0


def _classifier_cfg(args, settings: Settings, spec: GeneratorSpec | None = None) -> PipelineConfig:
    return PipelineConfig(
        classifier=args.classifier,
        generator=spec or GeneratorSpec(),
        threshold=settings.rf_threshold,
        seed=args.seed if args.seed is not None else settings.rf_seed,
        cap=args.cap,
    )


def _when_payload(table: analysis.WhenAccuracyTable) -> dict:
    return {
        "aggregate": {
            "n": table.n,
            "pct_tp_lt_tg": table.pct_tp_lt_tg,
            "pct_tp_none": table.pct_tp_none,
            "pct_tp_eq_tg": table.pct_tp_eq_tg,
            "avg_lead": table.avg_lead,
        },
        "by_tg": table.by_tg,
        "significance": {},
    }


def cmd_eval_when(args, settings: Settings) -> int:
    if args.pred:
        if not args.gold:
            raise ConfigurationError("--pred needs --gold")
        preds = read_jsonl(args.pred, "when_prediction")
        gold = _examples(args.gold)
        ids = {p.example_id for p in preds}
        if args.split:
            gold = partition(gold, read_split(args.split))[args.part]
        golds = {e.id: e.t_g for e in gold if e.id in ids or args.split}
    else:
        if not args.test:
            raise ConfigurationError("eval-when needs --model/--classifier with --test, or --pred with --gold")
        args.corpus = args.test
        target, _ = _parts(args)
        model = load_model(args.model) if args.model else None
        if args.classifier == "forest" and model is None:
            raise ConfigurationError("forest classifier needs --model")
        pipe_cfg = _classifier_cfg(args, settings)
        from bugsolve.pipeline import make_predictor

        predict = make_predictor(pipe_cfg, model)
        preds = pmap(predict, target, args.threads)
        if args.out:
            write_jsonl(preds, args.out)
        golds = {e.id: e.t_g for e in target}
    table = analysis.when_accuracy(preds, golds)
    if args.json:
        _dump_json(_when_payload(table), args.json)
    _write_text(tables.when_table({args.label: table}), None)
    return 0


def _metric_keys(spec: str) -> list[str]:
    keys = []
    for name in spec.split(","):
        name = name.strip().lower()
        if name not in METRIC_ALIASES:
            raise ConfigurationError(f"unknown metric {name!r}; choose from {', '.join(METRIC_ALIASES)}")
        keys.append(METRIC_ALIASES[name])
    return keys


def cmd_eval_gen(args, settings: Settings) -> int:
    keys = _metric_keys(args.metrics)
    hyp = {o.example_id: o.tokens for o in read_jsonl(args.hyp, "generator_output")}
    refs_all = {e.id: e.description_tokens for e in _examples(args.ref)}
    missing = sorted(set(hyp) - set(refs_all))
    if missing:
        raise ConfigurationError(f"hypothesis id {missing[0]} has no reference")
    refs = {i: refs_all[i] for i in sorted(hyp)}
    reports = {args.hyp: score_corpus(hyp, refs, keys)}
    significance = {}
    if args.compare:
        other = {o.example_id: o.tokens for o in read_jsonl(args.compare, "generator_output")}
        reports[args.compare] = score_corpus(other, refs, keys)
        if args.bootstrap:
            a, b = reports[args.hyp], reports[args.compare]
            ids = sorted(refs)
            for k in keys:
                res = bootstrap_compare(
                    [a.per_example[i][k] for i in ids],
                    [b.per_example[i][k] for i in ids],
                    settings.bootstrap_samples,
                    settings.bootstrap_size,
                    settings.alpha,
                    args.seed or 0,
                    args.threads,
                )
                significance[k] = res._asdict()
    if args.json:
        _dump_json(
            {
                "aggregate": {name: r.aggregate for name, r in reports.items()},
                "by_tg": {},
                "significance": significance,
                "n": len(refs),
            },
            args.json,
        )
    out = tables.metric_table(reports, keys)
    for k, res in significance.items():
        out += f"{tables.METRIC_LABELS[k]}: p = {res['p_value']:.4f}{' (significant)' if res['significant'] else ''}\n"
    _write_text(out, None)
    return 0


def cmd_pipeline(args, settings: Settings) -> int:
    target, train = _parts(args)
    spec = _gen_spec(args, settings)
    cfg = _classifier_cfg(args, settings, spec)
    model = load_model(args.model) if args.model else None
    if not args.report:
        pipe = Pipeline(cfg, model, train)
        outputs = pmap(lambda ex: pipe.run(ex)[1], target, args.threads)
        write_jsonl(outputs, args.out)
        print(f"outputs: {len(outputs)}")
        return 0
    rep = evaluate_pipeline(
        target,
        cfg,
        model,
        train,
        threads=args.threads,
        samples=settings.bootstrap_samples,
        sample_size=settings.bootstrap_size,
        alpha=settings.alpha,
    )
    write_jsonl(rep.outputs_tp, args.out)
    when = analysis.when_accuracy(rep.predictions, {e.id: e.t_g for e in target})
    payload = _when_payload(when)
    payload["aggregate"] = {"at_tp": rep.at_tp.aggregate, "at_tg": rep.at_tg.aggregate, "when": payload["aggregate"]}
    payload["significance"] = {k: v._asdict() for k, v in rep.significance.items()}
    payload["n"] = len(target)
    payload["classifier"] = cfg.classifier
    payload["generator"] = generator_name(spec)
    payload["predictions"] = {p.example_id: p.t_p for p in rep.predictions}
    payload["outputs"] = {
        "at_tp": {o.example_id: list(o.tokens) for o in rep.outputs_tp},
        "at_tg": {o.example_id: list(o.tokens) for o in rep.outputs_tg},
    }
    payload["per_example"] = {"at_tp": rep.at_tp.per_example, "at_tg": rep.at_tg.per_example}
    _dump_json(payload, args.report)
    _write_text(tables.pipeline_table({"Test": (rep.at_tp, rep.at_tg)}), None)
    return 0


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CorpusIOError(path, exc.strerror or str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc.msg})") from None


def cmd_report(args, settings: Settings) -> int:
    from bugsolve.metrics import MetricReport

    corpus = _examples(args.corpus)
    split = read_split(args.split) if args.split else None
    filtered = _examples(args.filtered) if args.filtered else None
    sections = ["Corpus statistics", tables.stats_table(corpus_stats(corpus, split), corpus_stats(filtered, split) if filtered else None)]
    groups = {"Full": analysis.novel_ngram_table(corpus)}
    if filtered:
        groups["Filtered"] = analysis.novel_ngram_table(filtered)
    sections += ["Novel n-grams in the reference (%)", tables.novel_ngram_table(groups)]
    if args.pipeline:
        rep = _read_json(args.pipeline)
        by_id = {e.id: e for e in corpus}
        ids = sorted(rep["predictions"])
        unknown = [i for i in ids if i not in by_id]
        if unknown:
            raise ConfigurationError(f"pipeline report id {unknown[0]} is not in the corpus")
        target = [by_id[i] for i in ids]

        class _P:
            def __init__(self, i, t):
                self.example_id, self.t_p = i, t

        when = analysis.when_accuracy([_P(i, t) for i, t in rep["predictions"].items()], {e.id: e.t_g for e in target})
        sections += ["When to generate (%)", tables.when_table({rep["classifier"]: when})]
        avg = "-" if when.avg_lead is None else f"{when.avg_lead:.3f}"
        sections[-1] += f"avg steps before t_g: {avg}\n"
        at_tp = MetricReport(per_example=rep["per_example"]["at_tp"], aggregate=rep["aggregate"]["at_tp"], n=rep["n"])
        at_tg = MetricReport(per_example=rep["per_example"]["at_tg"], aggregate=rep["aggregate"]["at_tg"], n=rep["n"])
        text = tables.pipeline_table({"Test": (at_tp, at_tg)})
        for k in ("bleu4", "meteor", "rougeL_f"):
            s = rep["significance"].get(k)
            if s:
                text += f"{tables.METRIC_LABELS[k]}: p = {s['p_value']:.4f}{' (significant)' if s['significant'] else ''}\n"
        sections += [f"Combined system ({rep['classifier']} + {rep['generator']})", text]
        rows = {
            "Copy Title": analysis.overlap_table({e.id: e.title_tokens for e in target}, target),
            f"{rep['generator']} @t_p": analysis.overlap_table(rep["outputs"]["at_tp"], target),
            f"{rep['generator']} @t_g": analysis.overlap_table(rep["outputs"]["at_tg"], target),
            "Reference": analysis.overlap_table({e.id: e.description_tokens for e in target}, target),
        }
        sections += ["N-gram overlap with the title and U_1..U_tg only (%)", tables.overlap_table(rows)]
    text = "\n".join(s if s.endswith("\n") else s + "\n" for s in sections)
    _write_text(text, args.out)
    return 0


# --- parser ---------------------------------------------------------------------


def _add_split(p, part: bool = True) -> None:
    p.add_argument("--split", help="split record (JSONL) produced by the split command")
    if part:
        p.add_argument("--part", choices=("train", "valid", "test"), default="test", help="split part to process")


def _add_gen(p) -> None:
    p.add_argument("--method", choices=METHODS, default="copy-title")
    p.add_argument("--source", choices=("u1", "utg"), default="utg")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--n-extract", type=int, default=1, help="sentences kept by lexrank")
    p.add_argument("--retrieval-field", choices=("title", "desc"), default="title")
    p.add_argument("--retrieval-scope", choices=("global", "project"), default="global")
    p.add_argument("--train", help="training corpus for retrieval (defaults to the split's train part)")


def _add_classifier(p) -> None:
    p.add_argument("--classifier", choices=CLASSIFIERS, default="forest")
    p.add_argument("--model", help="forest model file from train-when")
    p.add_argument("--cap", choices=("tg", "T"), default="tg", help="last step the classifier may choose")


def build_parser() -> Parser:
    parser = Parser(prog="bugsolve", description="Bug-report solution description toolkit.")
    parser.add_argument("--config", help="key = value settings file")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None, help="overrides rf.seed")
    parser.add_argument("--print-stopwords", action="store_true", help="print the stopword list and exit")
    sub = parser.add_subparsers(dest="command", parser_class=Parser)

    p = sub.add_parser("ingest", help="timelines -> examples")
    p.add_argument("--timelines", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rejects")

    p = sub.add_parser("fetch", help="download issue timelines from the GitHub REST API")
    p.add_argument("--project", required=True, help="owner/name")
    p.add_argument("--issue", type=int, action="append", required=True)
    p.add_argument("--host", default="https://api.github.com")
    p.add_argument("--out", required=True)

    p = sub.add_parser("filter", help="score the three noise filters and keep the clean subset")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reports")
    p.add_argument("--niwf-threshold", type=float)
    p.add_argument("--overlap-threshold", type=float)
    _add_split(p, part=False)

    p = sub.add_parser("split", help="time-ordered train/valid/test partition")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fractions", type=float, nargs=3)

    p = sub.add_parser("stats", help="corpus statistics table")
    p.add_argument("--corpus", required=True)
    p.add_argument("--filtered")
    p.add_argument("--json")
    _add_split(p, part=False)

    p = sub.add_parser("gen", help="run a generator")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--at", default="tg", help="tg, tp (needs --pred) or a step number")
    p.add_argument("--pred", help="when-predictions JSONL for --at tp")
    _add_gen(p)
    _add_split(p)

    p = sub.add_parser("train-when", help="train the random-forest when-classifier")
    p.add_argument("--train", required=True)
    p.add_argument("--aug", help="non-bug timelines used as negative-only augmentation")
    p.add_argument("--trees", type=int)
    p.add_argument("--max-vocab", type=int, default=300)
    p.add_argument("--class-weights", choices=("balanced", "fixed", "none"))
    p.add_argument("--out", required=True)
    _add_split(p, part=False)

    p = sub.add_parser("eval-when", help="predict t_p and/or score predictions")
    p.add_argument("--test")
    p.add_argument("--out", help="write predictions here")
    p.add_argument("--pred")
    p.add_argument("--gold")
    p.add_argument("--json")
    p.add_argument("--label", default="Test", help="column heading")
    p.add_argument("--train", help=argparse.SUPPRESS)
    _add_classifier(p)
    _add_split(p)

    p = sub.add_parser("eval-gen", help="score generator outputs")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--metrics", default="bleu4,meteor,rouge1,rouge2,rougel")
    p.add_argument("--compare")
    p.add_argument("--bootstrap", action="store_true")
    p.add_argument("--json")

    p = sub.add_parser("pipeline", help="classifier + generator at t_p")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="also evaluate @t_p vs @t_g and write a JSON report")
    p.add_argument("--generator", dest="method", choices=METHODS, default=argparse.SUPPRESS, help="alias of --method")
    _add_classifier(p)
    _add_gen(p)
    _add_split(p)

    p = sub.add_parser("report", help="assemble the text report")
    p.add_argument("--corpus", required=True)
    p.add_argument("--filtered")
    p.add_argument("--pipeline", help="JSON report written by the pipeline command")
    p.add_argument("--out")
    _add_split(p, part=False)
    return parser


COMMANDS = {
    "ingest": cmd_ingest,
    "fetch": cmd_fetch,
    "filter": cmd_filter,
    "split": cmd_split,
    "stats": cmd_stats,
    "gen": cmd_gen,
    "train-when": cmd_train_when,
    "eval-when": cmd_eval_when,
    "eval-gen": cmd_eval_gen,
    "pipeline": cmd_pipeline,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.print_stopwords:
            print("\n".join(sorted(STOPWORDS)))
            return 0
        if not args.command:
            raise UsageError("bugsolve: a command is required")
        if args.threads < 1:
            raise UsageError("bugsolve: --threads must be >= 1")
        settings = load_settings(
            args.config,
            niwf_threshold=getattr(args, "niwf_threshold", None),
            overlap_threshold=getattr(args, "overlap_threshold", None),
            split_fractions=tuple(args.fractions) if getattr(args, "fractions", None) else None,
            rf_trees=getattr(args, "trees", None),
            rf_seed=args.seed,
            class_weights=getattr(args, "class_weights", None),
        )
        return COMMANDS[args.command](args, settings)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (OSError, GitHubError) as exc:
        # CorpusIOError is also a CorpusError; I/O wins
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CorpusError, ConfigurationError, TrainingError, ModelFormatError, BoundsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())
