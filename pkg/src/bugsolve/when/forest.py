"""Random forest classifier (Gini, bootstrap, sqrt features) written on numpy.

Each tree draws its own generator from ``(seed, tree_index)``, so training
on one thread or many gives the same forest.
"""
from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

MAGIC = b"IDWHEN1\n"
_NODE = struct.Struct("<did")
_COUNT = struct.Struct("<I")

ClassWeight = Union[str, tuple[float, float], None]


class TrainingError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_features: str | int = "sqrt"
    min_samples_split: int = 2
    bootstrap: bool = True
    seed: int = 0
    class_weight: ClassWeight = "balanced"
    threads: int = 1

    def n_features_per_split(self, d: int) -> int:
        if self.max_features == "sqrt":
            return max(1, math.isqrt(d))
        if self.max_features in ("all", None):
            return d
        return max(1, min(d, int(self.max_features)))


@dataclass
class Tree:
    """Flat binary tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active[idx] = self.feature[node[idx]] >= 0
        return self.value[node]


def _best_split(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[float, float] | None:
    """(weighted child impurity, threshold) of the best cut on one feature."""
    order = np.argsort(x, kind="stable")
    xs, ys, ws = x[order], y[order], w[order]
    cw = np.cumsum(ws)[:-1]
    cp = np.cumsum(ws * ys)[:-1]
    total_w, total_p = cw[-1] + ws[-1], cp[-1] + ws[-1] * ys[-1]
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return None
    rw, rp = total_w - cw, total_p - cp
    with np.errstate(divide="ignore", invalid="ignore"):
        cost = 2 * cp * (cw - cp) / cw + 2 * rp * (rw - rp) / rw
    cost = np.where(valid & (cw > 0) & (rw > 0), cost, np.inf)
    i = int(np.argmin(cost))
    if not np.isfinite(cost[i]):
        return None
    thr = (xs[i] + xs[i + 1]) / 2
    if not xs[i] <= thr < xs[i + 1]:
        thr = xs[i]
    return float(cost[i]), float(thr)


def fit_tree(
    X: np.ndarray, y: np.ndarray, w: np.ndarray, rng: np.random.Generator, max_features: int, min_samples_split: int = 2
) -> Tree:
    feature: list[int] = []
    threshold: list[float] = []
    value: list[float] = []
    left: list[int] = []
    right: list[int] = []

    def new_node() -> int:
        for arr, fill in ((feature, -1), (threshold, 0.0), (value, 0.0), (left, -1), (right, -1)):
            arr.append(fill)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(len(y)))]
    d = X.shape[1]
    while stack:
        node, idx = stack.pop()
        wn, yn = w[idx], y[idx]
        total = wn.sum()
        pos = (wn * yn).sum()
        value[node] = float(pos / total) if total > 0 else 0.0
        if pos == 0 or pos == total or len(idx) < min_samples_split:
            continue
        best = None
        visited = 0
        for f in rng.permutation(d):
            if visited >= max_features and best is not None:
                break
            xf = X[idx, f]
            if xf.min() == xf.max():
                continue
            visited += 1
            found = _best_split(xf, yn, wn)
            if found is not None and (best is None or found[0] < best[0]):
                best = (found[0], found[1], int(f))
        if best is None:
            continue
        _, thr, f = best
        mask = X[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        left[node], right[node] = new_node(), new_node()
        stack.append((right[node], idx[~mask]))
        stack.append((left[node], idx[mask]))
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(value, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
    )


@dataclass
class ForestModel:
    trees: list[Tree]
    n_features: int
    config: ForestConfig
    class_weights: tuple[float, float]
    featurizer: object | None = field(default=None, repr=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def step_probability(self, discussion, t: int) -> float:
        if self.featurizer is None:
            raise TrainingError("model carries no featurizer")
        row = self.featurizer.to_array(self.featurizer.featurize(discussion, t))
        return float(self.predict_proba(row[None, :])[0])


def _resolve_class_weights(y: np.ndarray, spec: ClassWeight) -> tuple[float, float]:
    if spec is None:
        return 1.0, 1.0
    if spec == "balanced":
        n, n_pos = len(y), int(y.sum())
        return n / (2 * n_pos), n / (2 * (n - n_pos))
    w_pos, w_neg = spec
    return float(w_pos), float(w_neg)


def train_forest(
    X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray | None = None, config: ForestConfig | None = None
) -> ForestModel:
    config = config or ForestConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) < 2 or y.min() == y.max():
        raise TrainingError("training needs at least two instances and both labels")
    base = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    w_pos, w_neg = _resolve_class_weights(y, config.class_weight)
    weights = base * np.where(y > 0, w_pos, w_neg)
    k = config.n_features_per_split(X.shape[1])

    def build(tree_index: int) -> Tree:
        rng = np.random.default_rng([config.seed, tree_index])
        if config.bootstrap:
            draws = rng.integers(0, len(y), len(y))
            counts = np.bincount(draws, minlength=len(y))
            keep = np.nonzero(counts)[0]
            return fit_tree(X[keep], y[keep], weights[keep] * counts[keep], rng, k, config.min_samples_split)
        return fit_tree(X, y, weights, rng, k, config.min_samples_split)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            trees = list(pool.map(build, range(config.n_trees)))
    else:
        trees = [build(i) for i in range(config.n_trees)]
    return ForestModel(trees, X.shape[1], config, (w_pos, w_neg))


# --- serialization ---------------------------------------------------------------


def _preorder(tree: Tree) -> list[tuple[float, int, float]]:
    out = []
    stack = [0]
    while stack:
        n = stack.pop()
        out.append((float(tree.threshold[n]), int(tree.feature[n]), float(tree.value[n])))
        if tree.feature[n] >= 0:
            stack.append(int(tree.right[n]))
            stack.append(int(tree.left[n]))
    return out


def _from_preorder(nodes: list[tuple[float, int, float]]) -> Tree:
    feature, threshold, value, left, right = [], [], [], [], []
    open_nodes: list[int] = []
    for i, (thr, f, val) in enumerate(nodes):
        if i > 0 and not open_nodes:
            raise ModelFormatError("trailing nodes in tree record")
        me = len(feature)
        feature.append(f)
        threshold.append(thr)
        value.append(val)
        left.append(-1)
        right.append(-1)
        if open_nodes:
            parent = open_nodes[-1]
            if left[parent] == -1:
                left[parent] = me
            else:
                right[parent] = me
                open_nodes.pop()
        if f >= 0:
            open_nodes.append(me)
    if open_nodes or not nodes:
        raise ModelFormatError("truncated tree record")
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(value, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
    )


def save_model(model: ForestModel, path) -> None:
    """Write ``IDWHEN1``, a JSON header line, then each tree as a node count
    followed by (threshold, feature, leaf value) triples in preorder."""
    header = {
        "n_trees": model.n_trees,
        "n_features": model.n_features,
        "class_weights": list(model.class_weights),
        "config": {
            k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(model.config).items() if k != "threads"
        },
    }
    fz = model.featurizer
    if fz is not None:
        header["featurizer"] = {"idf": dict(fz.model.idf), "n_docs": fz.model.n_docs}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for tree in model.trees:
            nodes = _preorder(tree)
            fh.write(_COUNT.pack(len(nodes)))
            for node in nodes:
                fh.write(_NODE.pack(*node))


def load_model(path) -> ForestModel:
    from bugsolve.tfidf import TfidfModel
    from bugsolve.when.features import WhenFeaturizer

    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise ModelFormatError(f"{path}: missing IDWHEN1 magic")
    nl = data.index(b"\n", len(MAGIC))
    header = json.loads(data[len(MAGIC) : nl])
    pos = nl + 1
    trees = []
    for _ in range(header["n_trees"]):
        (count,) = _COUNT.unpack_from(data, pos)
        pos += _COUNT.size
        nodes = [_NODE.unpack_from(data, pos + i * _NODE.size) for i in range(count)]
        pos += count * _NODE.size
        trees.append(_from_preorder(nodes))
    if pos != len(data):
        raise ModelFormatError(f"{path}: trailing bytes")
    cfg = dict(header["config"])
    if isinstance(cfg.get("class_weight"), list):
        cfg["class_weight"] = tuple(cfg["class_weight"])
    featurizer = None
    if "featurizer" in header:
        from types import MappingProxyType

        fz = header["featurizer"]
        featurizer = WhenFeaturizer(TfidfModel(MappingProxyType(dict(sorted(fz["idf"].items()))), fz["n_docs"]))
    return ForestModel(trees, header["n_features"], ForestConfig(**cfg), tuple(header["class_weights"]), featurizer)
