"""Acceptance criteria, one PASS/FAIL line each.

Run ``python tests/test_acceptance.py`` for the lines alone, or let pytest
collect the file; the lines are repeated in the terminal summary.
"""
from __future__ import annotations

import hashlib
import random
import sys
import tempfile
import time
from contextlib import redirect_stdout
from io import StringIO
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bugsolve import analysis, tables  # noqa: E402
from bugsolve.cli import main  # noqa: E402
from bugsolve.corpus import write_jsonl  # noqa: E402
from bugsolve.filters import apply_filters, build_iwf_table, drop_accounting, greedy_extractive_oracle, niwf_threshold  # noqa: E402
from bugsolve.generators import GeneratorSpec, copy_title  # noqa: E402
from bugsolve.ingest import extract_example  # noqa: E402
from bugsolve.metrics import bleu4, lcs_length, meteor_lite, rouge_l, rouge_n  # noqa: E402
from bugsolve.pipeline import Pipeline, PipelineConfig, evaluate_pipeline  # noqa: E402
from bugsolve.significance import bootstrap_compare  # noqa: E402
from bugsolve.when import (  # noqa: E402
    DIST_P_POS,
    ForestConfig,
    WhenPrediction,
    baseline_first,
    baseline_random,
    baseline_second,
    first_positive,
    train_forest,
)

import factories  # noqa: E402
import test_filters  # noqa: E402
import test_metrics  # noqa: E402
import test_pipeline  # noqa: E402
import test_when  # noqa: E402

RESULTS: list[str] = []


def metric_oracles() -> str:
    s = test_metrics.s
    tol = test_metrics.TOL
    assert min(len(test_metrics.BLEU_CASES), len(test_metrics.METEOR_CASES), len(test_metrics.ROUGE_CASES)) >= 10
    for hyp, ref, want in test_metrics.BLEU_CASES:
        assert abs(bleu4(s(hyp), s(ref)) - want) <= tol, ("bleu", hyp)
    for hyp, ref, want in test_metrics.METEOR_CASES:
        assert abs(meteor_lite(s(hyp), s(ref)) - want) <= tol, ("meteor", hyp)
    for hyp, ref, r1, r2, rl in test_metrics.ROUGE_CASES:
        for got, exp in ((rouge_n(s(hyp), s(ref), 1), r1), (rouge_n(s(hyp), s(ref), 2), r2), (rouge_l(s(hyp), s(ref)), rl)):
            assert all(abs(g - e) <= tol for g, e in zip(got, exp)), ("rouge", hyp)
    test_metrics.test_boundaries()
    rng = random.Random(11)
    for _ in range(100):
        a = [rng.choice("abcd") for _ in range(rng.randint(0, 8))]
        b = [rng.choice("abcd") for _ in range(rng.randint(0, 8))]
        assert lcs_length(a, b) == test_metrics.brute_lcs(a, b)
    n = len(test_metrics.BLEU_CASES) + len(test_metrics.METEOR_CASES) + len(test_metrics.ROUGE_CASES)
    return f"{n} hand cases, 100 LCS cases"


def greedy_oracle() -> str:
    rng = random.Random(2024)
    for _ in range(100):
        vocab = [f"v{i}" for i in range(rng.randint(2, 20))]
        sents = [[rng.choice(vocab) for _ in range(rng.randint(1, 7))] for _ in range(rng.randint(1, 8))]
        ref = [rng.choice(vocab) for _ in range(rng.randint(1, 8))]
        assert greedy_extractive_oracle(sents, ref) == test_filters.naive_oracle(sents, ref)
    return "100 corpora"


def filter_procedure() -> str:
    table = build_iwf_table(test_filters.TRAIN_DESCRIPTIONS)
    corpus = [
        test_filters.mk(f"o/r#{i}", t, u, tg, d, factories.BASE_TS + i)
        for i, (_, t, u, tg, d, _, _) in enumerate(test_filters.FIXTURE, start=1)
    ]
    reports, _ = apply_filters(corpus, table, niwf_t=0.5, overlap_t=0.5)
    by_id = {r.example_id: r for r in reports}
    for i, (*_, verdicts, first) in enumerate(test_filters.FIXTURE, start=1):
        rep = by_id[f"o/r#{i}"]
        assert (rep.verdict_generic, rep.verdict_uninformative, rep.verdict_insufficient) == verdicts
        assert rep.first_failing == first
    counts = drop_accounting(reports)
    assert counts == {"generic": 2, "uninformative": 3, "insufficient": 2, "kept": 3}
    grid = [i / 100 for i in range(1, 101)]
    random.Random(3).shuffle(grid)
    assert niwf_threshold(grid, 0.10) == 0.10
    return "drops " + " ".join(f"{k}={v}" for k, v in counts.items())


def tg_extraction() -> str:
    mid = extract_example(factories.mid_discussion())
    assert mid.t_g == 2
    first = extract_example(factories.commit_first())
    assert getattr(first, "code", None) == "t_g_out_of_range"
    tie = extract_example(factories.tie_timestamp())
    assert tie.t_g == 2 and tie.T == 3
    return "2 / rejected / tie not counted"


def classifier_contracts() -> str:
    accs = []
    for seed in (0, 1, 2):
        X, y = test_when._separable(seed)
        model = train_forest(X, y, config=ForestConfig(n_trees=50, seed=seed))
        accs.append(float(((model.predict_proba(X) >= 0.5) == y).mean()))
    assert min(accs) >= 0.95, accs
    rng = random.Random(5)
    for _ in range(1000):
        trace = [rng.random() for _ in range(rng.randint(1, 12))]
        thr = rng.random()
        t_p, probs = first_positive(lambda t: trace[t - 1], len(trace), thr)
        if t_p is None:
            assert all(p < thr for p in trace) and probs == trace
        else:
            assert trace[t_p - 1] >= thr and all(p < thr for p in trace[: t_p - 1]) and probs == trace[:t_p]
    one = factories.example("o/r#1", "t", [("a", "x")], 1, "d")
    four = factories.example("o/r#2", "t", [("a", "x")] * 4, 4, "d")
    assert baseline_first(four).t_p == 1 and baseline_first(one).t_p == 1
    assert baseline_second(one).t_p is None and baseline_second(four).t_p == 2
    assert DIST_P_POS == 0.549
    assert baseline_random(four, "dist") == baseline_random(four, "dist", p_pos=0.549)
    ex1 = [factories.example(f"o/r#{i}", "t", [("a", "x")], 1, "d") for i in range(10_000)]
    rate = sum(baseline_random(e, "uniform", seed=11).t_p == 1 for e in ex1) / len(ex1)
    assert 0.49 <= rate <= 0.51
    return f"acc min {min(accs):.3f}, 1000 traces, uniform rate {rate:.3f}"


def pipeline_identity() -> str:
    corpus = factories.random_examples(3, 50)
    small = dict(samples=200, sample_size=50)
    rep = evaluate_pipeline(corpus, PipelineConfig(classifier="gold_oracle", generator=GeneratorSpec(method="lexrank")), **small)
    assert rep.at_tp.model_dump_json() == rep.at_tg.model_dump_json()
    none = evaluate_pipeline(corpus, PipelineConfig(generator=GeneratorSpec(method="copy-title")), predictor=test_pipeline.never, **small)
    assert none.at_tp.aggregate["bleu4"] == 0
    return "50 examples"


def truncation_safety() -> str:
    rng = random.Random(17)
    fixtures = [test_pipeline._poisoned(rng, i) for i in range(200)]
    chosen = {ex.id: t for ex, t in fixtures}
    train = factories.random_examples(99, 30)

    def predictor(ex):
        t = chosen[ex.id]
        return WhenPrediction(example_id=ex.id, t_p=t, probs=(0.0,) * (t - 1) + (1.0,))

    for spec in test_pipeline.SPECS:
        pipe = Pipeline(PipelineConfig(generator=spec), train=train, predictor=predictor)
        inner, inputs = pipe.generate, []
        pipe.generate = lambda ctx, ref, inner=inner, inputs=inputs: inputs.append(ctx) or inner(ctx, ref)
        for ex, _ in fixtures:
            _, out = pipe.run(ex)
            assert not any(tok.startswith("zz") for tok in out.tokens)
        for ctx in inputs:
            assert not any(tok.startswith("zz") for u in ctx.utterances for tok in u.tokens)
    return f"200 fixtures x {len(test_pipeline.SPECS)} generators"


def _run_all(root: Path, threads: int) -> str:
    root.mkdir()
    tl = root / "timelines.jsonl"
    write_jsonl([factories.mid_discussion(), factories.commit_first(), factories.tie_timestamp(), *factories.random_corpus(21, 80)], tl)
    g = ["--threads", str(threads), "--seed", "3"]
    steps = [
        ["ingest", "--timelines", tl, "--out", root / "ex.jsonl"],
        ["filter", "--corpus", root / "ex.jsonl", "--out", root / "kept.jsonl"],
        ["split", "--corpus", root / "kept.jsonl", "--out", root / "split.jsonl"],
        ["train-when", "--train", root / "kept.jsonl", "--split", root / "split.jsonl", "--trees", "15", "--out", root / "m"],
        ["pipeline", "--corpus", root / "kept.jsonl", "--split", root / "split.jsonl", "--model", root / "m",
         "--generator", "lexrank", "--out", root / "out.jsonl", "--report", root / "pipe.json"],
        ["report", "--corpus", root / "ex.jsonl", "--filtered", root / "kept.jsonl", "--split", root / "split.jsonl",
         "--pipeline", root / "pipe.json", "--out", root / "report.txt"],
    ]
    with redirect_stdout(StringIO()):
        for step in steps:
            assert main(g + [str(a) for a in step]) == 0, step[0]
    digest = hashlib.sha256()
    for p in sorted(root.iterdir()):
        digest.update(p.name.encode() + p.read_bytes())
    return digest.hexdigest()


def determinism() -> str:
    with tempfile.TemporaryDirectory() as tmp:
        a = _run_all(Path(tmp) / "a", 1)
        b = _run_all(Path(tmp) / "b", 1)
        c = _run_all(Path(tmp) / "c", 8)
    assert a == b == c
    return f"sha256 {a[:12]}"


def bootstrap_sanity() -> str:
    import inspect

    scores = [0.1, 0.4, 0.3, 0.8, 0.5]
    same = bootstrap_compare(scores, list(scores), samples=500, sample_size=100)
    assert not same.significant
    sep = bootstrap_compare([1.0] * 20, [0.0] * 20, samples=500, sample_size=100)
    assert sep.p_value == 0 and sep.significant
    params = inspect.signature(bootstrap_compare).parameters
    assert params["samples"].default == 10_000 and params["sample_size"].default == 5_000
    return "defaults 10000 x 5000"


def table_shapes() -> str:
    golden = Path(__file__).parent / "golden"
    from test_cli import _timelines

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        tl = _timelines(tmp, 20)
        with redirect_stdout(StringIO()):
            assert main(["ingest", "--timelines", str(tl), "--out", str(tmp / "ex.jsonl")]) == 0
            assert main(["split", "--corpus", str(tmp / "ex.jsonl"), "--out", str(tmp / "split.jsonl")]) == 0
        buf = StringIO()
        with redirect_stdout(buf):
            assert main(["stats", "--corpus", str(tmp / "ex.jsonl"), "--split", str(tmp / "split.jsonl")]) == 0
    assert buf.getvalue() == (golden / "stats.txt").read_text(encoding="utf-8")

    golds = {f"o/r#{i}": g for i, g in enumerate([1, 1, 2, 2, 3, 4, 5, 6, 7, 9])}
    t_ps = [1, None, 2, 1, None, 4, 5, 2, None, 9]
    preds = [
        WhenPrediction(example_id=f"o/r#{i}", t_p=t, probs=() if t is None else (0.0,) * (t - 1) + (1.0,))
        for i, t in enumerate(t_ps)
    ]
    first = [WhenPrediction(example_id=i, t_p=1, probs=(1.0,)) for i in golds]
    when = tables.when_table({"Random Forest": analysis.when_accuracy(preds, golds), "First": analysis.when_accuracy(first, golds)})
    assert when == (golden / "when.txt").read_text(encoding="utf-8")

    exs = factories.random_examples(2, 25)
    rows = {
        "Copy Title": analysis.overlap_table({e.id: e.title_tokens for e in exs}, exs),
        "Reference": analysis.overlap_table({e.id: e.description_tokens for e in exs}, exs),
    }
    assert tables.overlap_table(rows) == (golden / "overlap.txt").read_text(encoding="utf-8")

    rng = random.Random(8)
    for i in range(50):
        ex = factories.random_example(rng, f"o/r#{i}")
        title, utts = ex.title_tokens, [u.tokens for u in ex.utterances[: ex.t_g]]
        assert analysis.overlap_report(copy_title(ex).tokens, title, utts, 1) == (100.0, 0.0)
    return "3 golden files, copy-title (100, 0) on 50 fixtures"


CRITERIA = [
    ("metric oracle suite", metric_oracles, 5),
    ("greedy-oracle equivalence", greedy_oracle, 10),
    ("filter procedure", filter_procedure, None),
    ("t_g extraction", tg_extraction, None),
    ("classifier contracts", classifier_contracts, None),
    ("pipeline identity", pipeline_identity, 10),
    ("truncation safety", truncation_safety, None),
    ("determinism", determinism, 60),
    ("bootstrap sanity", bootstrap_sanity, None),
    ("table-shape reproduction", table_shapes, None),
]


def run_criterion(name, fn, limit) -> tuple[bool, str]:
    start = time.perf_counter()
    try:
        detail = fn()
        ok = True
    except AssertionError as exc:
        ok, detail = False, f"assertion failed {exc}".strip()
    elapsed = time.perf_counter() - start
    if ok and limit is not None and elapsed >= limit:
        ok, detail = False, f"{detail}; over the {limit} s limit"
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail} ({elapsed:.2f} s)"
    RESULTS.append(line)
    print(line)
    return ok, line


@pytest.mark.parametrize("name,fn,limit", CRITERIA, ids=[c[0].replace(" ", "_") for c in CRITERIA])
def test_criterion(name, fn, limit):
    ok, line = run_criterion(name, fn, limit)
    assert ok, line


if __name__ == "__main__":
    failed = sum(not run_criterion(*c)[0] for c in CRITERIA)
    sys.exit(1 if failed else 0)
