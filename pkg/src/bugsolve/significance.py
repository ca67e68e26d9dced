"""Paired bootstrap test over per-example scores."""
from __future__ import annotations

import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Literal, NamedTuple

import numpy as np

DEFAULT_SAMPLES = 10_000
DEFAULT_SAMPLE_SIZE = 5_000
DEFAULT_ALPHA = 0.05
CHUNK = 500


class BootstrapResult(NamedTuple):
    p_value: float
    significant: bool
    winner: Literal["a", "b"] | None
    delta: float


def _chunk_losses(diff: np.ndarray, sign: float, seed: int, chunk: int, count: int, size: int) -> int:
    rng = np.random.default_rng([seed, chunk])
    idx = rng.integers(0, len(diff), size=(count, size))
    sums = diff[idx].sum(axis=1) * sign
    return int(np.count_nonzero(sums <= 0))


def bootstrap_compare(
    scores_a: Sequence[float],
    scores_b: Sequence[float],
    samples: int = DEFAULT_SAMPLES,
    sample_size: int = DEFAULT_SAMPLE_SIZE,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
    threads: int = 1,
) -> BootstrapResult:
    """Resample example indices with replacement ``samples`` times, each of
    ``sample_size`` draws, and report how often the observed winner fails
    to win. Resamples are generated in chunks of 500 seeded by
    ``(seed, chunk)``, so the thread count does not change the result.

    A tie on the full data has no winner and gets p = 1.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired score vectors must have equal length ({a.size} vs {b.size})")
    if a.size == 0:
        raise ValueError("need at least one paired score")
    if samples < 1 or sample_size < 1:
        raise ValueError("samples and sample_size must be positive")
    diff = a - b
    delta = math.fsum(diff) / diff.size
    if delta == 0:
        return BootstrapResult(1.0, False, None, 0.0)
    sign = 1.0 if delta > 0 else -1.0
    jobs = [(c, min(CHUNK, samples - c * CHUNK)) for c in range(math.ceil(samples / CHUNK))]

    def run(job: tuple[int, int]) -> int:
        return _chunk_losses(diff, sign, seed, job[0], job[1], sample_size)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            losses = sum(pool.map(run, jobs))
    else:
        losses = sum(map(run, jobs))
    p = losses / samples
    return BootstrapResult(p, p < alpha, "a" if sign > 0 else "b", delta)
