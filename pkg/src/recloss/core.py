"""Score sets, ranks and the counting sets shared by every other module.

Ties are resolved with ``>=`` everywhere: a negative scoring exactly the
positive's score counts against the positive, both for the rank and for the
sampled count of negatives at or above the positive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class Rank(int):
    """1-based rank of the positive item (1 is best)."""

    def __new__(cls, value: int) -> "Rank":
        if isinstance(value, bool) or int(value) != value:
            raise InvalidInputError(f"rank must be an integer, got {value!r}")
        if value < 1:
            raise InvalidInputError(f"rank must be >= 1, got {value}")
        return super().__new__(cls, int(value))

    def __repr__(self) -> str:
        return f"Rank({int(self)})"

    @property
    def value(self) -> int:
        return int(self)


@dataclass(frozen=True)
class ScoreSet:
    """A positive score plus the scores of the negatives it competes with.

    ``negative_scores`` is either the full negative catalog
    (``is_sampled=False``) or a sampled subset of size K.
    """

    positive_score: float
    negative_scores: np.ndarray
    is_sampled: bool = False

    def __post_init__(self) -> None:
        pos = float(self.positive_score)
        negs = np.array(self.negative_scores, dtype=np.float64).reshape(-1)
        if negs.size == 0:
            raise InvalidInputError("negative_scores must be non-empty")
        if not math.isfinite(pos) or not np.all(np.isfinite(negs)):
            raise InvalidInputError("scores must be finite")
        negs.flags.writeable = False
        object.__setattr__(self, "positive_score", pos)
        object.__setattr__(self, "negative_scores", negs)
        object.__setattr__(self, "is_sampled", bool(self.is_sampled))

    @classmethod
    def of(cls, positive: float, negatives: Sequence[float], sampled: bool = False) -> "ScoreSet":
        return cls(positive, np.asarray(negatives, dtype=np.float64), sampled)

    @property
    def k(self) -> int:
        return int(self.negative_scores.size)


@dataclass(frozen=True)
class GammaCounts:
    """Counts of negatives scoring ``>= s+`` and ``>= 0``.

    ``gamma_k`` / ``gamma0_k`` count within the given negatives; the
    population fields are only filled in when those negatives are the whole
    catalog, and are ``None`` otherwise.
    """

    gamma_k: int
    gamma0_k: int
    population_gamma: Optional[int] = field(default=None)
    population_gamma0: Optional[int] = field(default=None)

    def __post_init__(self) -> None:
        for name in ("gamma_k", "gamma0_k", "population_gamma", "population_gamma0"):
            v = getattr(self, name)
            if v is not None and (int(v) != v or v < 0):
                raise InvalidInputError(f"{name} must be a non-negative integer, got {v!r}")


def compute_rank(scores: ScoreSet) -> Rank:
    """Return ``1 + #{i : s_i >= s+}``."""
    negs = scores.negative_scores
    return Rank(1 + int(np.count_nonzero(negs >= scores.positive_score)))


def compute_gamma_counts(scores: ScoreSet) -> GammaCounts:
    negs = scores.negative_scores
    gamma = int(np.count_nonzero(negs >= scores.positive_score))
    gamma0 = int(np.count_nonzero(negs >= 0.0))
    if scores.is_sampled:
        return GammaCounts(gamma, gamma0)
    return GammaCounts(gamma, gamma0, gamma, gamma0)
