"""Sequential first-positive inference and the simple when-baselines."""
from __future__ import annotations

import random
from collections.abc import Callable, Sequence
from typing import Literal

from pydantic import Field, model_validator

from bugsolve.corpus import Example, Record
from bugsolve.when.features import WhenFeaturizer, make_instances
from bugsolve.when.forest import ForestConfig, ForestModel, train_forest

DIST_P_POS = 0.549


class WhenPrediction(Record):
    example_id: str = Field(alias="id")
    t_p: int | None = Field(default=None, ge=1)
    probs: tuple[float, ...] = ()

    @model_validator(mode="after")
    def _no_probs_after_tp(self) -> WhenPrediction:
        if self.t_p is not None and len(self.probs) != self.t_p:
            raise ValueError("probs must stop at t_p")
        return self


def first_positive(prob_at: Callable[[int], float], max_t: int, threshold: float = 0.5) -> tuple[int | None, list[float]]:
    """Query steps 1..max_t in order and stop at the first P >= threshold."""
    probs: list[float] = []
    for t in range(1, max_t + 1):
        p = float(prob_at(t))
        probs.append(p)
        if p >= threshold:
            return t, probs
    return None, probs


def _cap(example: Example, max_t: int | None, cap: str) -> int:
    if max_t is not None:
        return min(max_t, example.T)
    return example.T if cap == "T" else example.t_g


def infer_tp(
    model: ForestModel,
    example: Example,
    threshold: float = 0.5,
    max_t: int | None = None,
    cap: Literal["tg", "T"] = "tg",
) -> WhenPrediction:
    t_p, probs = first_positive(lambda t: model.step_probability(example, t), _cap(example, max_t, cap), threshold)
    return WhenPrediction(example_id=example.id, t_p=t_p, probs=tuple(probs))


def baseline_first(example: Example) -> WhenPrediction:
    return WhenPrediction(example_id=example.id, t_p=1, probs=(1.0,))


def baseline_second(example: Example, max_t: int | None = None, cap: Literal["tg", "T"] = "tg") -> WhenPrediction:
    """Negative at t=1, positive at t=2; never positive when the cap is 1."""
    t_p, probs = first_positive(lambda t: 1.0 if t == 2 else 0.0, _cap(example, max_t, cap))
    return WhenPrediction(example_id=example.id, t_p=t_p, probs=tuple(probs))


def baseline_random(
    example: Example,
    mode: Literal["uniform", "dist"] = "uniform",
    p_pos: float | None = None,
    seed: int = 0,
    max_t: int | None = None,
    cap: Literal["tg", "T"] = "tg",
) -> WhenPrediction:
    """Coin flip after each utterance; the stream is seeded by (seed, example id)
    so results do not depend on processing order."""
    if mode == "uniform":
        p = 0.5
    else:
        p = DIST_P_POS if p_pos is None else p_pos
    if not 0 < p <= 1:
        raise ValueError("p_pos must lie in (0, 1]")
    rng = random.Random(f"{seed}:{example.id}")
    t_p, probs = first_positive(lambda t: 1.0 if rng.random() < p else 0.0, _cap(example, max_t, cap))
    return WhenPrediction(example_id=example.id, t_p=t_p, probs=tuple(probs))


def estimate_p_pos(examples: Sequence[Example]) -> float:
    """Example-level positive rate, mean of 1 / t_g."""
    return sum(1 / e.t_g for e in examples) / len(examples)


def train_when_model(
    train: Sequence[Example],
    augmentation: Sequence = (),
    config: ForestConfig | None = None,
    aug_weight: float = 0.7,
    max_vocab: int | None = 300,
) -> ForestModel:
    """Fit the featurizer on training text, build step instances, train the forest."""
    import numpy as np

    featurizer = WhenFeaturizer.fit([*train, *augmentation], max_vocab=max_vocab)
    instances = make_instances(train, augmentation, aug_weight, featurizer)
    X = featurizer.matrix(instances)
    y = np.array([i.label for i in instances], dtype=float)
    w = np.array([i.weight for i in instances])
    model = train_forest(X, y, w, config)
    model.featurizer = featurizer
    return model
