"""Sampled-loss training and full-catalog evaluation.

Each training instance is (user, history, positive): every item of the
user's training prefix is a positive, predicted from the items before it
(the factor scorer ignores the history). Per instance, K negatives are drawn
uniformly without replacement from the items the user never interacted with,
using a fresh generator for each (epoch, batch). The batch loss is the plain
sum of per-instance losses.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from ..core import InvalidInputError
from ..losses import LossKind, batch_gradient, batch_loss
from ..metrics import metric_at_k_array
from ..sampling import draw_indices, make_rng
from .data import SplitDataset
from .model import ModelParams, ScorerKind, init_params, user_matrix

logger = logging.getLogger(__name__)

TRACE_FIELDS = ("epoch", "split", "metric", "cutoff", "value")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    loss: str = "bpr"
    negatives: int = 1
    scorer: str = "factor"
    dim: int = 64
    batch_size: int = 128
    lr: float = 0.001
    epochs: int = 100
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    cutoff: int = 10
    init_scale: float = 0.1

    def __post_init__(self) -> None:
        self.loss = LossKind.parse(self.loss).value
        self.scorer = ScorerKind.parse(self.scorer).value
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidInputError(f"unknown optimizer {self.optimizer!r}; expected sgd or adam")
        for name in ("negatives", "dim", "batch_size", "cutoff"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise InvalidInputError("epochs must be >= 0")
        if self.lr < 0 or self.init_scale <= 0:
            raise InvalidInputError("lr must be >= 0 and init_scale > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise InvalidInputError("adam needs 0 <= beta1, beta2 < 1 and eps > 0")

    def as_dict(self) -> dict:
        return asdict(self)


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, tensors, grads) -> None:
        for t, g in zip(tensors, grads):
            t -= self.lr * g


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list = []
        self.v: list = []

    def step(self, tensors, grads) -> None:
        if not self.m:
            self.m = [np.zeros_like(t) for t in tensors]
            self.v = [np.zeros_like(t) for t in tensors]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for t, g, m, v in zip(tensors, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            t -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class Instances:
    users: np.ndarray
    positives: np.ndarray
    histories: list


def build_instances(split: SplitDataset, scorer: ScorerKind | str) -> Instances:
    first = 0 if ScorerKind.parse(scorer) is ScorerKind.FACTOR else 1
    users, positives, histories = [], [], []
    for u, seq in enumerate(split.train):
        for t in range(first, len(seq)):
            users.append(u)
            positives.append(seq[t])
            histories.append(np.asarray(seq[:t], dtype=np.int64))
    return Instances(np.asarray(users, dtype=np.int64), np.asarray(positives, dtype=np.int64), histories)


def negative_pools(split: SplitDataset) -> list:
    """Per-user array of items the user never interacted with."""
    everything = np.arange(split.n_items)
    return [np.setdiff1d(everything, seen, assume_unique=True) for seen in split.interacted]


def _scatter_rows(target: np.ndarray, index: np.ndarray, coef: np.ndarray, vectors: np.ndarray) -> None:
    """``target[index[b, j]] += coef[b, j] * vectors[b]`` with repeated indices accumulated.

    Builds the (rows x batch) weight matrix with ``bincount`` and applies it
    with one matrix product, which is far cheaper than ``np.add.at``.
    """
    batch = vectors.shape[0]
    owner = np.repeat(np.arange(batch), index.shape[1])
    flat = index.reshape(-1) * batch + owner
    weights = np.bincount(flat, weights=coef.reshape(-1), minlength=target.shape[0] * batch)
    target += weights.reshape(target.shape[0], batch) @ vectors


def loss_and_grads(
    params: ModelParams,
    scorer: ScorerKind | str,
    users: np.ndarray,
    histories: list,
    positives: np.ndarray,
    negatives: np.ndarray,
    loss: LossKind | str,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Summed batch loss and its gradients w.r.t. the item and user tables.

    The per-score partials come from :func:`recloss.losses.batch_gradient`
    and are chained through the dot products by hand.
    """
    scorer = ScorerKind.parse(scorer)
    items = params.item_embeddings
    if scorer is ScorerKind.FACTOR:
        h = params.user_embeddings[users]
    else:
        h = np.stack([items[hist].mean(axis=0) for hist in histories])
    hp = items[positives]  # (B, d)
    hn = items[negatives]  # (B, K, d)
    s_pos = np.einsum("bd,bd->b", h, hp)
    s_neg = np.einsum("bd,bkd->bk", h, hn)
    value = float(batch_loss(loss, s_pos, s_neg).sum())
    d_pos, d_neg = batch_gradient(loss, s_pos, s_neg)

    g_items = np.zeros_like(items)
    g_users = np.zeros_like(params.user_embeddings)
    g_h = d_pos[:, None] * hp + np.einsum("bk,bkd->bd", d_neg, hn)
    _scatter_rows(g_items, positives[:, None], d_pos[:, None], h)
    _scatter_rows(g_items, negatives, d_neg, h)
    if scorer is ScorerKind.FACTOR:
        _scatter_rows(g_users, users[:, None], np.ones((users.size, 1)), g_h)
    else:
        # Histories are ragged: pad with index 0 and zero weight.
        width = max(len(hist) for hist in histories)
        index = np.zeros((len(histories), width), dtype=np.int64)
        coef = np.zeros((len(histories), width))
        for b, hist in enumerate(histories):
            index[b, : len(hist)] = hist
            coef[b, : len(hist)] = 1.0 / len(hist)
        _scatter_rows(g_items, index, coef, g_h)
    return value, g_items, g_users


@dataclass
class EvalResult:
    ndcg: float
    mrr: float
    ranks: np.ndarray


def evaluate(params: ModelParams, scorer: ScorerKind | str, split: SplitDataset, k: int = 10, target: str = "test") -> EvalResult:
    """Mean NDCG@k and MRR@k, ranking the target item against every non-interacted item.

    ``target="valid"`` predicts the validation item from the training prefix;
    ``target="test"`` predicts the test item from prefix plus validation item.
    Ties count against the target.
    """
    if target == "valid":
        histories, targets = split.train, split.valid
    elif target == "test":
        histories = [list(tr) + [int(v)] for tr, v in zip(split.train, split.valid)]
        targets = split.test
    else:
        raise InvalidInputError(f"target must be 'valid' or 'test', got {target!r}")
    h = user_matrix(params, scorer, histories)
    scores = h @ params.item_embeddings.T  # (n, m)
    rows = np.arange(split.n_users)
    pos = scores[rows, targets]
    ge = scores >= pos[:, None]
    seen_rows = np.repeat(rows, [len(s) for s in split.interacted])
    ge[seen_rows, np.concatenate(split.interacted)] = False
    ranks = 1 + ge.sum(axis=1)
    return EvalResult(
        float(metric_at_k_array(ranks, k, "ndcg").mean()),
        float(metric_at_k_array(ranks, k, "mrr").mean()),
        ranks,
    )


@dataclass
class TrainResult:
    params: ModelParams
    best_epoch: int
    trace: list = field(default_factory=list)  # dicts with TRACE_FIELDS


def _trace_rows(epoch: int, cutoff: int, valid: EvalResult, test: EvalResult, loss: Optional[float]) -> list:
    rows = [
        {"epoch": epoch, "split": "valid", "metric": "ndcg", "cutoff": cutoff, "value": valid.ndcg},
        {"epoch": epoch, "split": "valid", "metric": "mrr", "cutoff": cutoff, "value": valid.mrr},
        {"epoch": epoch, "split": "test", "metric": "ndcg", "cutoff": cutoff, "value": test.ndcg},
        {"epoch": epoch, "split": "test", "metric": "mrr", "cutoff": cutoff, "value": test.mrr},
    ]
    if loss is not None:
        rows.append({"epoch": epoch, "split": "train", "metric": "loss", "cutoff": "", "value": loss})
    return rows


def train(
    split: SplitDataset,
    config: TrainConfig,
    on_epoch: Optional[Callable[[int, list], None]] = None,
) -> TrainResult:
    """Train with sampled negatives; keep the parameters of the best validation NDCG@k.

    Epoch 0 in the trace is the untrained model. ``on_epoch`` receives each
    epoch's trace rows as they are produced.
    """
    scorer = ScorerKind.parse(config.scorer)
    pools = negative_pools(split)
    for u, pool in enumerate(pools):
        if pool.size < config.negatives:
            raise InvalidInputError(f"user {u} has only {pool.size} negatives; K={config.negatives} is too large")
    inst = build_instances(split, scorer)
    params = init_params(split.n_users, split.n_items, config.dim, config.seed, config.init_scale)
    if config.optimizer == "adam":
        opt = Adam(config.lr, config.beta1, config.beta2, config.eps)
    else:
        opt = SGD(config.lr)

    def record(epoch, loss):
        valid = evaluate(params, scorer, split, config.cutoff, "valid")
        test = evaluate(params, scorer, split, config.cutoff, "test")
        rows = _trace_rows(epoch, config.cutoff, valid, test, loss)
        result.trace.extend(rows)
        if on_epoch is not None:
            on_epoch(epoch, rows)
        return valid.ndcg

    result = TrainResult(params.copy(), 0)
    best = record(0, None)
    n = inst.users.size
    for epoch in range(1, config.epochs + 1):
        order = make_rng(config.seed, 2, epoch).permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            sel = order[start : start + config.batch_size]
            rng = make_rng(config.seed, 1, epoch, b)
            users = inst.users[sel]
            negs = np.stack([pools[u][draw_indices(pools[u].size, config.negatives, rng)] for u in users.tolist()])
            hists = [inst.histories[i] for i in sel.tolist()]
            value, g_items, g_users = loss_and_grads(params, scorer, users, hists, inst.positives[sel], negs, config.loss)
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {b}")
            opt.step([params.item_embeddings, params.user_embeddings], [g_items, g_users])
            total += value
        if not params.all_finite():
            raise TrainingDiverged(f"non-finite parameters after epoch {epoch}")
        ndcg_valid = record(epoch, total / max(n, 1))
        if ndcg_valid > best:
            best = ndcg_valid
            result.params = params.copy()
            result.best_epoch = epoch
        logger.debug("epoch %d loss %.6f valid ndcg@%d %.4f", epoch, total / max(n, 1), config.cutoff, ndcg_valid)
    return result
