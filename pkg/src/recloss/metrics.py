"""Single-positive ranking metrics.

``log2`` appears only inside NDCG's discount. Everywhere else in the package
(losses and the ``-log metric`` quantities compared against them) uses the
natural log.
"""
from __future__ import annotations

import math
from enum import Enum

import numpy as np

from .core import InvalidInputError


class Metric(str, Enum):
    NDCG = "ndcg"
    MRR = "mrr"

    @classmethod
    def parse(cls, value: "Metric | str") -> "Metric":
        try:
            return cls(str(getattr(value, "value", value)).lower())
        except ValueError:
            raise InvalidInputError(f"unknown metric {value!r}; expected ndcg or mrr") from None


def _check_rank(rank) -> int:
    r = int(rank)
    if r != rank or r < 1:
        raise InvalidInputError(f"rank must be an integer >= 1, got {rank!r}")
    return r


def ndcg(rank) -> float:
    """``1 / log2(1 + rank)``."""
    return 1.0 / math.log2(1 + _check_rank(rank))


def mrr(rank) -> float:
    """``1 / rank``."""
    return 1.0 / _check_rank(rank)


def metric_value(rank, metric: Metric | str) -> float:
    return ndcg(rank) if Metric.parse(metric) is Metric.NDCG else mrr(rank)


def neg_log_metric(rank, metric: Metric | str) -> float:
    """``-log(metric(rank))``: ``log(log2(1 + r))`` for NDCG, ``log(r)`` for MRR."""
    r = _check_rank(rank)
    if Metric.parse(metric) is Metric.NDCG:
        return math.log(math.log2(1 + r))
    return math.log(r)


def metric_at_k(rank, k: int, kind: Metric | str) -> float:
    """Metric value when ``rank <= k``, exactly ``0.0`` beyond the cutoff."""
    if int(k) != k or k < 1:
        raise InvalidInputError(f"cutoff k must be an integer >= 1, got {k!r}")
    r = _check_rank(rank)
    if r > k:
        return 0.0
    return metric_value(r, kind)


def metric_at_k_array(ranks: np.ndarray, k: int, kind: Metric | str) -> np.ndarray:
    """Vectorised :func:`metric_at_k` over an integer array of ranks."""
    ranks = np.asarray(ranks)
    if ranks.size and ranks.min() < 1:
        raise InvalidInputError("ranks must be >= 1")
    if k < 1:
        raise InvalidInputError(f"cutoff k must be >= 1, got {k}")
    r = ranks.astype(np.float64)
    if Metric.parse(kind) is Metric.NDCG:
        vals = 1.0 / np.log2(1.0 + r)
    else:
        vals = 1.0 / r
    return np.where(ranks <= k, vals, 0.0)
