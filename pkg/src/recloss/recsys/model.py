"""Embedding tables and the two dot-product scorers.

``factor``
    classic matrix factorisation, ``s(u, i) = h_u . h_i`` with a learned
    user table.
``history-mean``
    the user vector is the mean item embedding of the user's history, a
    minimal sequence model: ``s(u, i) = mean_j(h_j) . h_i``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import InvalidInputError
from ..sampling import make_rng

MODEL_MAGIC = "recloss-model"


class ScorerKind(str, Enum):
    FACTOR = "factor"
    HISTORY_MEAN = "history-mean"

    @classmethod
    def parse(cls, value: "ScorerKind | str") -> "ScorerKind":
        try:
            return cls(str(getattr(value, "value", value)).lower().replace("_", "-"))
        except ValueError:
            raise InvalidInputError(f"unknown scorer {value!r}; expected factor or history-mean") from None


@dataclass
class ModelParams:
    item_embeddings: np.ndarray  # (m, d)
    user_embeddings: np.ndarray  # (n, d); unused by history-mean

    def __post_init__(self) -> None:
        if self.item_embeddings.ndim != 2 or self.user_embeddings.ndim != 2:
            raise InvalidInputError("embedding tables must be 2-D")
        if self.item_embeddings.shape[1] != self.user_embeddings.shape[1] or self.d < 1:
            raise InvalidInputError("item and user tables must share a positive embedding dimension")

    @property
    def d(self) -> int:
        return int(self.item_embeddings.shape[1])

    def copy(self) -> "ModelParams":
        return ModelParams(self.item_embeddings.copy(), self.user_embeddings.copy())

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.item_embeddings).all() and np.isfinite(self.user_embeddings).all())


def init_params(n_users: int, n_items: int, d: int, seed: int = 0, scale: float = 0.1) -> ModelParams:
    rng = make_rng(seed, 0)
    items = rng.normal(0.0, scale, (n_items, d))
    users = rng.normal(0.0, scale, (n_users, d))
    return ModelParams(items, users)


def user_vector(params: ModelParams, scorer: ScorerKind | str, user: int, history: Sequence[int]) -> np.ndarray:
    if ScorerKind.parse(scorer) is ScorerKind.FACTOR:
        return params.user_embeddings[user]
    if len(history) == 0:
        raise InvalidInputError("history-mean scorer needs a non-empty history")
    return params.item_embeddings[np.asarray(history, dtype=np.int64)].mean(axis=0)


def user_matrix(params: ModelParams, scorer: ScorerKind | str, histories: Sequence[Sequence[int]]) -> np.ndarray:
    """User vectors for every user, shape ``(n, d)``."""
    if ScorerKind.parse(scorer) is ScorerKind.FACTOR:
        return params.user_embeddings
    return np.stack([user_vector(params, scorer, u, h) for u, h in enumerate(histories)])


def score(params: ModelParams, scorer: ScorerKind | str, user: int, history: Sequence[int], item: int) -> float:
    if not 0 <= item < params.item_embeddings.shape[0]:
        raise InvalidInputError(f"item {item} out of range")
    if ScorerKind.parse(scorer) is ScorerKind.FACTOR and not 0 <= user < params.user_embeddings.shape[0]:
        raise InvalidInputError(f"user {user} out of range")
    return float(user_vector(params, scorer, user, history) @ params.item_embeddings[item])


def save_model(params: ModelParams, scorer: ScorerKind | str, path: Path | str) -> None:
    """Text dump: one header line, then the item rows, then the user rows."""
    scorer = ScorerKind.parse(scorer)
    m, n = params.item_embeddings.shape[0], params.user_embeddings.shape[0]
    with open(path, "w") as fh:
        fh.write(f"# {MODEL_MAGIC} d={params.d} m={m} n={n} scorer={scorer.value}\n")
        np.savetxt(fh, params.item_embeddings, fmt="%.17g")
        np.savetxt(fh, params.user_embeddings, fmt="%.17g")


def load_model(path: Path | str) -> tuple[ModelParams, ScorerKind]:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 6 or header[1] != MODEL_MAGIC:
            raise InvalidInputError(f"{path}: not a {MODEL_MAGIC} file")
        fields = dict(h.split("=", 1) for h in header[2:])
        d, m, n = int(fields["d"]), int(fields["m"]), int(fields["n"])
        data = np.loadtxt(fh, ndmin=2)
    if data.shape != (m + n, d):
        raise InvalidInputError(f"{path}: expected {(m + n, d)} values, got {data.shape}")
    return ModelParams(data[:m].copy(), data[m:].copy()), ScorerKind.parse(fields["scorer"])
