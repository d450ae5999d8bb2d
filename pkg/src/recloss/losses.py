"""BCE, BPR and CCE per-user losses with analytic gradients.

All three take one positive score ``s+`` and a set of negative scores
``s_i`` (full catalog or a sampled subset)::

    BCE = softplus(-s+) + sum_i softplus(s_i)
    BPR = sum_i softplus(s_i - s+)
    CCE = log(1 + sum_i exp(s_i - s+))

The ``batch_*`` kernels work on a batch of rows, ``pos`` of shape ``(B,)``
and ``neg`` of shape ``(B, K)``. The :class:`ScoreSet` functions are thin
wrappers over a one-row batch, so single evaluations, the fuzzers and the
trainer share the same arithmetic.

With a single negative, CCE is evaluated through the BPR code path, so the
two agree bitwise (values and gradients) rather than to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import InvalidInputError, ScoreSet


class LossKind(str, Enum):
    BCE = "bce"
    BPR = "bpr"
    CCE = "cce"

    @classmethod
    def parse(cls, value: "LossKind | str") -> "LossKind":
        try:
            return cls(str(getattr(value, "value", value)).lower())
        except ValueError:
            raise InvalidInputError(f"unknown loss {value!r}; expected bce, bpr or cce") from None


@dataclass(frozen=True)
class LossGradient:
    d_positive: float
    d_negatives: np.ndarray


@dataclass(frozen=True)
class ScoreBound:
    """Half-width ``S`` of the score box ``[-S, S]``."""

    S: float

    def __post_init__(self) -> None:
        if not (self.S > 0 and np.isfinite(self.S)):
            raise InvalidInputError(f"score bound must be a positive finite real, got {self.S!r}")


def softplus(x: np.ndarray) -> np.ndarray:
    """``log(1 + exp(x))`` without overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _as_batch(pos, neg) -> tuple[np.ndarray, np.ndarray]:
    pos = np.asarray(pos, dtype=np.float64).reshape(-1)
    neg = np.asarray(neg, dtype=np.float64)
    if neg.ndim != 2 or neg.shape[0] != pos.shape[0] or neg.shape[1] == 0:
        raise InvalidInputError(f"expected pos (B,) and neg (B, K>0), got {pos.shape} and {neg.shape}")
    return pos, neg


def _cce_shift(diff: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Shift by c = max(0, max_i d_i): Z = exp(c) * (exp(-c) + sum_i exp(d_i - c)).
    c = np.maximum(diff.max(axis=1), 0.0)
    w = np.exp(diff - c[:, None])
    base = np.exp(-c)
    return c, w, base


def batch_loss(kind: LossKind | str, pos, neg) -> np.ndarray:
    """Per-row loss, shape ``(B,)``."""
    kind = LossKind.parse(kind)
    pos, neg = _as_batch(pos, neg)
    if kind is LossKind.BCE:
        return softplus(-pos) + softplus(neg).sum(axis=1)
    diff = neg - pos[:, None]
    if kind is LossKind.BPR or neg.shape[1] == 1:
        return softplus(diff).sum(axis=1)
    c, w, base = _cce_shift(diff)
    s = w.sum(axis=1)
    # c == 0 keeps log1p's precision for small sums.
    return np.where(c > 0, c + np.log(base + s), np.log1p(s))


def batch_gradient(kind: LossKind | str, pos, neg) -> tuple[np.ndarray, np.ndarray]:
    """Per-row partials ``(d/ds+, d/ds_i)`` with shapes ``(B,)`` and ``(B, K)``."""
    kind = LossKind.parse(kind)
    pos, neg = _as_batch(pos, neg)
    if kind is LossKind.BCE:
        return -sigmoid(-pos), sigmoid(neg)
    diff = neg - pos[:, None]
    if kind is LossKind.BPR or neg.shape[1] == 1:
        d_neg = sigmoid(diff)
        return -d_neg.sum(axis=1), d_neg
    _, w, base = _cce_shift(diff)
    denom = base + w.sum(axis=1)
    d_neg = w / denom[:, None]
    d_pos = -(w.sum(axis=1) / denom)
    return d_pos, d_neg


def loss_value(kind: LossKind | str, scores: ScoreSet) -> float:
    """Loss of one positive against ``scores.negative_scores``."""
    return float(batch_loss(kind, [scores.positive_score], scores.negative_scores[None, :])[0])


def loss_gradient(kind: LossKind | str, scores: ScoreSet) -> LossGradient:
    d_pos, d_neg = batch_gradient(kind, [scores.positive_score], scores.negative_scores[None, :])
    return LossGradient(float(d_pos[0]), d_neg[0].copy())


def check_k1_equivalence(scores: ScoreSet) -> bool:
    """True iff BPR and CCE give the identical float for a single-negative set."""
    if scores.k != 1:
        raise InvalidInputError(f"expected exactly one negative score, got {scores.k}")
    return loss_value(LossKind.BPR, scores) == loss_value(LossKind.CCE, scores)


def box_minimizer(bound: ScoreBound, k: int) -> ScoreSet:
    """The common minimiser of all three losses over ``[-S, S]``.

    Every loss strictly decreases in ``s+`` and strictly increases in each
    ``s_i``, so the corner ``s+ = S, s_i = -S`` wins.
    """
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    return ScoreSet(bound.S, np.full(k, -bound.S), is_sampled=True)
