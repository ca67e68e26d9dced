import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bugsolve.preprocess import BoundsError
from bugsolve.when import (
    DIST_P_POS,
    Discussion,
    ForestConfig,
    ModelFormatError,
    TrainingError,
    WhenFeaturizer,
    WhenPrediction,
    balanced_class_weights,
    baseline_first,
    baseline_random,
    baseline_second,
    estimate_p_pos,
    first_positive,
    infer_tp,
    load_model,
    make_instances,
    save_model,
    train_forest,
    train_when_model,
)
from factories import ev, example, random_example, random_examples, timeline


class Scripted:
    """Stands in for a trained model: fixed probability per step."""

    def __init__(self, probs):
        self.probs = probs
        self.calls = []

    def step_probability(self, discussion, t):
        self.calls.append(t)
        return self.probs[t - 1]


def _ex(t_g=3, T=None, id="o/r#1"):
    T = T or t_g
    return example(id, "crash on seek", [(f"a{i % 2}", f"turn {i} words here") for i in range(T)], t_g, "fix seek")


# --- instances and features -------------------------------------------------


def test_make_instances_labels_and_weights():
    bugs = [_ex(3), _ex(1, T=2, id="o/r#2")]
    aug = [Discussion("o/r#9", ("question",), bugs[0].utterances[:2])]
    inst = make_instances(bugs, aug)
    assert [(i.example_id, i.t, i.label, i.weight) for i in inst] == [
        ("o/r#1", 1, False, 1.0),
        ("o/r#1", 2, False, 1.0),
        ("o/r#1", 3, True, 1.0),
        ("o/r#2", 1, True, 1.0),
        ("o/r#9", 1, False, 0.7),
        ("o/r#9", 2, False, 0.7),
    ]
    # steps after t_g are never instances
    assert all(i.t <= 1 for i in inst if i.example_id == "o/r#2")


def test_balanced_weights():
    assert balanced_class_weights([True, False]) == (1.0, 1.0)
    assert balanced_class_weights([True, False, False, False]) == (2.0, 4 / 6)
    with pytest.raises(ValueError):
        balanced_class_weights([False, False])


def test_scalar_features_by_hand():
    ex = example(
        "o/r#1",
        "video stalls",
        [("alice", "It stalls."), ("bob", "Which build?"), ("alice", "Build five of the app.")],
        3,
        "d",
    )
    fz = WhenFeaturizer.fit([ex])
    f1 = fz.featurize(ex, 1)
    assert (f1.position_t, f1.len_ut, f1.author_index, f1.author_freq, f1.len_ratio, f1.title_len) == (1, 3, 1, 1.0, 1.0, 2)
    f2 = fz.featurize(ex, 2)
    assert (f2.author_index, f2.author_freq, f2.len_ratio) == (2, 0.5, 3 / 6)
    f3 = fz.featurize(ex, 3)
    assert (f3.author_index, f3.author_freq, f3.len_ut) == (1, 2 / 3, 6)
    assert f3.len_ratio == pytest.approx(6 / 12)
    # aggregate vector covers everything seen so far
    assert set(f3.tfidf_agg) >= set(f1.tfidf_ut) | set(f2.tfidf_ut)
    with pytest.raises(BoundsError):
        fz.featurize(ex, 4)
    with pytest.raises(BoundsError):
        fz.featurize(ex, 0)
    assert fz.to_array(f3).shape == (fz.dim,)
    assert len(fz.feature_names()) == fz.dim


def test_featurizer_vocab_cap_and_readonly():
    corpus = random_examples(3, 20)
    fz = WhenFeaturizer.fit(corpus, max_vocab=5)
    assert len(fz.vocab) == 5
    before = tuple(fz.vocab)
    for ex in corpus:
        fz.featurize(ex, 1)
    assert tuple(fz.vocab) == before


def test_discussion_from_timeline():
    tl = timeline("o/r", 4, "Question: how do I loop?", [ev("comment", "a", 10, "How to loop a playlist?"), ev("comment", "b", 20, "Use repeat mode.")])
    d = Discussion.from_timeline(tl)
    assert d.id == "o/r#4" and d.title_tokens[0] == "question"
    assert len(d.utterances) == 2


# --- forest -----------------------------------------------------------------


def _separable(seed, n=200, noise=4, margin=0.5):
    """Two informative features with a gap around the boundary plus noise columns."""
    rng = np.random.default_rng(seed)
    rows = []
    while len(rows) < n:
        x = rng.normal(size=2 + noise)
        if abs(x[0] + x[1]) >= margin:
            rows.append(x)
    X = np.array(rows)
    return X, (X[:, 0] + X[:, 1] > 0).astype(float)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_forest_separable(seed):
    X, y = _separable(seed)
    model = train_forest(X, y, config=ForestConfig(n_trees=50, seed=seed))
    assert ((model.predict_proba(X) >= 0.5) == y).mean() >= 0.95
    Xt, yt = _separable(seed + 100)
    assert ((model.predict_proba(Xt) >= 0.5) == yt).mean() >= 0.95


def test_forest_determinism_and_threads():
    X, y = _separable(5)
    a = train_forest(X, y, config=ForestConfig(n_trees=20, seed=3))
    b = train_forest(X, y, config=ForestConfig(n_trees=20, seed=3, threads=8))
    assert np.array_equal(a.predict_proba(X), b.predict_proba(X))
    for ta, tb in zip(a.trees, b.trees):
        assert np.array_equal(ta.feature, tb.feature) and np.array_equal(ta.threshold, tb.threshold)


def test_forest_duplicate_rows():
    X = np.array([[0.0], [0.0], [1.0], [1.0]] * 5)
    y = np.array([0, 0, 1, 1] * 5, dtype=float)
    m = train_forest(X, y, config=ForestConfig(n_trees=10))
    assert np.array_equal(m.predict_proba(np.array([[0.0], [1.0]])), [0.0, 1.0])


def test_class_weights_help_minority_recall():
    rng = np.random.default_rng(0)
    n = 600
    y = (rng.random(n) < 0.1).astype(float)
    X = np.column_stack([y + rng.normal(scale=0.9, size=n), rng.normal(size=(n, 3))])
    Xt_y = (rng.random(n) < 0.1).astype(float)
    Xt = np.column_stack([Xt_y + rng.normal(scale=0.9, size=n), rng.normal(size=(n, 3))])

    def recall(cw):
        m = train_forest(X, y, config=ForestConfig(n_trees=30, class_weight=cw, min_samples_split=40))
        pred = m.predict_proba(Xt) >= 0.5
        return pred[Xt_y == 1].mean()

    assert recall("balanced") > recall(None)


def test_training_errors():
    with pytest.raises(TrainingError):
        train_forest(np.zeros((3, 2)), np.zeros(3))
    with pytest.raises(TrainingError):
        train_forest(np.zeros((1, 2)), np.ones(1))


def test_save_load_round_trip(tmp_path):
    corpus = random_examples(1, 30)
    model = train_when_model(corpus, config=ForestConfig(n_trees=8, seed=1))
    path = tmp_path / "when.model"
    save_model(model, path)
    assert path.read_bytes().startswith(b"IDWHEN1\n")
    loaded = load_model(path)
    assert loaded.featurizer.vocab == model.featurizer.vocab
    for ex in corpus:
        for t in range(1, ex.t_g + 1):
            assert loaded.step_probability(ex, t) == model.step_probability(ex, t)
    save_model(loaded, tmp_path / "again.model")
    assert (tmp_path / "again.model").read_bytes() == path.read_bytes()


def test_load_rejects_corruption(tmp_path):
    bad = tmp_path / "bad.model"
    bad.write_bytes(b"NOPE\n")
    with pytest.raises(ModelFormatError):
        load_model(bad)
    model = train_when_model(random_examples(2, 10), config=ForestConfig(n_trees=2))
    good = tmp_path / "good.model"
    save_model(model, good)
    bad.write_bytes(good.read_bytes() + b"x")
    with pytest.raises(ModelFormatError):
        load_model(bad)


def test_augmentation_lowers_probability_on_augmented_turns():
    corpus = random_examples(4, 40)
    aug = [Discussion(f"q/q#{i}", ("question",), ex.utterances) for i, ex in enumerate(corpus[:10])]
    model = train_when_model(corpus, aug, config=ForestConfig(n_trees=10))
    assert model.featurizer is not None and model.n_trees == 10


# --- inference ----------------------------------------------------------------


def test_infer_tp_scripted():
    ex = _ex(3, T=5)
    always = Scripted([1.0] * 5)
    pred = infer_tp(always, ex)
    assert (pred.t_p, pred.probs) == (1, (1.0,))
    assert always.calls == [1]
    never = Scripted([0.0] * 5)
    pred = infer_tp(never, ex)
    assert pred.t_p is None and never.calls == [1, 2, 3]
    pred = infer_tp(Scripted([0.0] * 5), ex, cap="T")
    assert pred.t_p is None and len(pred.probs) == 5
    pred = infer_tp(Scripted([0.2, 0.7, 0.9]), ex)
    assert (pred.t_p, pred.probs) == (2, (0.2, 0.7))
    assert infer_tp(Scripted([0.0] * 5), ex, threshold=0).t_p == 1
    assert infer_tp(Scripted([1.0] * 5), ex, threshold=1.01).t_p is None
    assert infer_tp(Scripted([0.5] * 5), ex).t_p == 1


@settings(max_examples=1000, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=1, max_size=12),
    st.floats(0, 1),
)
def test_first_positive_invariant(trace, threshold):
    t_p, probs = first_positive(lambda t: trace[t - 1], len(trace), threshold)
    if t_p is None:
        assert all(p < threshold for p in trace) and probs == trace
    else:
        assert trace[t_p - 1] >= threshold
        assert all(p < threshold for p in trace[: t_p - 1])
        assert probs == trace[:t_p]


def test_prediction_record_validates_probs():
    with pytest.raises(ValueError):
        WhenPrediction(example_id="o/r#1", t_p=2, probs=(0.9,))


def test_baseline_first_and_second():
    for t_g in (1, 2, 5):
        ex = _ex(t_g, T=t_g + 1)
        assert baseline_first(ex).t_p == 1
        assert baseline_first(ex).probs == (1.0,)
    assert baseline_second(_ex(1, T=3)).t_p is None
    assert baseline_second(_ex(1, T=3), cap="T").t_p == 2
    second = baseline_second(_ex(4))
    assert (second.t_p, second.probs) == (2, (0.0, 1.0))


def test_baseline_random():
    ex = _ex(5)
    assert DIST_P_POS == 0.549
    a = baseline_random(ex, "dist", seed=7)
    assert a == baseline_random(ex, "dist", seed=7)
    always = baseline_random(ex, "dist", p_pos=1.0)
    assert always.t_p == 1
    with pytest.raises(ValueError):
        baseline_random(ex, "dist", p_pos=0.0)
    # uniform mode ignores p_pos
    assert baseline_random(ex, "uniform", p_pos=1.0, seed=3) == baseline_random(ex, "uniform", seed=3)


def test_baseline_random_default_matches_explicit_rate():
    exs = [_ex(3, id=f"o/r#{i}") for i in range(50)]
    assert [baseline_random(e, "dist") for e in exs] == [baseline_random(e, "dist", p_pos=0.549) for e in exs]


def test_baseline_random_uniform_rate():
    hits = 0
    n = 10_000
    for i in range(n):
        pred = baseline_random(_ex(1, id=f"o/r#{i}"), "uniform", seed=11)
        hits += pred.t_p == 1
    assert 0.49 <= hits / n <= 0.51


def test_baseline_random_order_independent():
    exs = [_ex(4, id=f"o/r#{i}") for i in range(20)]
    fwd = {e.id: baseline_random(e, "dist", seed=2) for e in exs}
    rev = {e.id: baseline_random(e, "dist", seed=2) for e in reversed(exs)}
    assert fwd == rev


def test_estimate_p_pos():
    assert estimate_p_pos([_ex(1), _ex(2), _ex(4)]) == pytest.approx((1 + 0.5 + 0.25) / 3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_random_baseline_bounded_by_tg(seed):
    ex = random_example(random.Random(seed), "o/r#1")
    pred = baseline_random(ex, "dist", seed=seed)
    assert pred.t_p is None or 1 <= pred.t_p <= ex.t_g
