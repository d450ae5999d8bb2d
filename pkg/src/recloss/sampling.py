"""Uniform negative sampling without replacement.

Every random draw comes from a Philox (counter-based) generator keyed by
``(seed, stream_index)``, so parallel workers with different stream indices
never share a stream and any draw can be replayed in isolation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import InvalidInputError, ScoreSet

# Above this k/n ratio a partial Fisher-Yates shuffle is cheaper than
# rejection sampling into a set.
DENSE_RATIO = 1.0 / 64.0

# Cap on (trials x population) cells materialised at once by the batch sampler.
_BATCH_CELLS = 1 << 22


@dataclass(frozen=True)
class SamplerConfig:
    k: int
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.k) != self.k or self.k < 1:
            raise InvalidInputError(f"k must be a positive integer, got {self.k!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise InvalidInputError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for ``(seed, *stream)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def draw_indices(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` distinct indices from ``range(n)``, every k-subset equally likely."""
    if k > n:
        raise InvalidInputError(f"cannot draw {k} distinct items from a population of {n}")
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    if k / n > DENSE_RATIO:
        idx = list(range(n))
        for i, j in enumerate(rng.integers(np.arange(k), n).tolist()):
            idx[i], idx[j] = idx[j], idx[i]
        return np.array(idx[:k], dtype=np.int64)
    # The first k distinct values of an i.i.d. uniform stream form a uniform k-subset.
    seen: dict[int, None] = {}
    while len(seen) < k:
        for v in rng.integers(0, n, size=2 * (k - len(seen))).tolist():
            seen.setdefault(v, None)
            if len(seen) == k:
                break
    return np.fromiter(seen, dtype=np.int64, count=k)


def sample_negatives(population: Sequence[int], config: SamplerConfig, stream_index: int = 0) -> list:
    """Draw ``config.k`` distinct ids from ``population``."""
    pop = list(population)
    if len(set(pop)) != len(pop):
        raise InvalidInputError("population contains duplicate ids")
    if config.k > len(pop):
        raise InvalidInputError(f"k={config.k} exceeds population size {len(pop)}")
    if stream_index < 0:
        raise InvalidInputError("stream_index must be non-negative")
    idx = draw_indices(len(pop), config.k, make_rng(config.seed, stream_index))
    return [pop[i] for i in idx.tolist()]


def draw_index_batch(n: int, k: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    """``(trials, k)`` array; each row is an independent uniform k-subset of ``range(n)``.

    Vectorised counterpart of :func:`draw_indices` for Monte Carlo work:
    dense ratios rank i.i.d. uniform keys (a uniformly random permutation),
    sparse ratios redraw whole rows until their entries are distinct.
    """
    if not 1 <= k <= n:
        raise InvalidInputError(f"need 1 <= k <= n, got k={k}, n={n}")
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    out = np.empty((trials, k), dtype=np.int64)
    if k == 1:
        out[:, 0] = rng.integers(0, n, size=trials)
        return out
    if k / n > DENSE_RATIO:
        chunk = max(1, _BATCH_CELLS // n)
        for start in range(0, trials, chunk):
            stop = min(trials, start + chunk)
            keys = rng.random((stop - start, n))
            if k < n:
                part = np.argpartition(keys, k - 1, axis=1)[:, :k]
            else:
                part = np.argsort(keys, axis=1)
            out[start:stop] = part
        return out
    todo = np.arange(trials)
    while todo.size:
        rows = rng.integers(0, n, size=(todo.size, k))
        srt = np.sort(rows, axis=1)
        ok = np.all(srt[:, 1:] != srt[:, :-1], axis=1)
        out[todo[ok]] = rows[ok]
        todo = todo[~ok]
    return out


def sample_gamma_count(
    full_scores: ScoreSet,
    config: SamplerConfig,
    condition: str,
    trials: int,
    stream_index: int = 0,
) -> np.ndarray:
    """Empirical distribution of the number of sampled negatives meeting ``condition``.

    ``condition`` is ``"vs_positive"`` (``s_i >= s+``) or ``"vs_zero"``
    (``s_i >= 0``). Returns frequencies indexed by count ``0..k``.
    """
    if full_scores.is_sampled:
        raise InvalidInputError("full_scores must cover the whole negative population")
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    negs = full_scores.negative_scores
    if condition == "vs_positive":
        hit = negs >= full_scores.positive_score
    elif condition == "vs_zero":
        hit = negs >= 0.0
    else:
        raise InvalidInputError(f"unknown condition {condition!r}")
    if config.k > negs.size:
        raise InvalidInputError(f"k={config.k} exceeds population size {negs.size}")
    idx = draw_index_batch(negs.size, config.k, trials, make_rng(config.seed, stream_index))
    counts = hit[idx].sum(axis=1)
    return np.bincount(counts, minlength=config.k + 1) / trials
