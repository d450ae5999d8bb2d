"""Checks tying losses, metrics, sampling and the hypergeometric bounds together.

Deterministic checks
    * full losses: ``-log ndcg(r+) <= CCE <= BPR`` always, and ``BPR <= BCE``
      when ``s+ >= 0``;
    * sampled losses: ``BPR >= |G| log 2``, ``BCE >= |G0| log 2`` and
      ``CCE >= log |G|`` (vacuous when ``|G| = 0``), with ``G`` / ``G0`` the
      sampled negatives scoring ``>= s+`` / ``>= 0``.

Probabilistic check
    :func:`monte_carlo_bound_check` samples K negatives many times and counts
    how often ``-log metric(r+) <= sampled loss``. The rank is the TRUE rank
    over the full population while the loss only sees the sample; the
    frequency is compared with the hypergeometric lower bound.

All inequality checks allow an absolute slack of ``SLACK`` for rounding.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import InvalidInputError, ScoreSet, compute_gamma_counts, compute_rank
from .hypergeom import BoundProbabilityQuery, HypergeomParams, bound_probability
from .losses import LossKind, batch_gradient, batch_loss
from .metrics import Metric, neg_log_metric
from .sampling import SamplerConfig, draw_index_batch, make_rng

SLACK = 1e-9
LN2 = math.log(2.0)

SURFACE_FIELDS = ("K", "r_plus", "loss", "metric", "lower_bound")
REPORT_FIELDS = ("loss", "metric", "trials", "frequency", "theoretical_bound", "std_err")

GENERATORS = ("uniform", "gaussian", "near_tie")


@dataclass(frozen=True)
class ChainCheck:
    ndcg_le_cce: bool
    cce_le_bpr: bool
    bpr_le_bce: Optional[bool]  # None when s+ < 0 (not applicable)

    @property
    def ok(self) -> bool:
        return self.ndcg_le_cce and self.cce_le_bpr and self.bpr_le_bce is not False


@dataclass(frozen=True)
class LowerBoundCheck:
    bpr: bool
    bce: bool
    cce: bool

    @property
    def ok(self) -> bool:
        return self.bpr and self.bce and self.cce


# -- batch kernels ---------------------------------------------------------------


def _neg_log_ndcg_from_counts(counts: np.ndarray) -> np.ndarray:
    return np.log(np.log2(2.0 + counts))  # rank = counts + 1


def full_chain_batch(pos: np.ndarray, neg: np.ndarray):
    """Boolean arrays ``(ndcg<=cce, cce<=bpr, bpr<=bce, applies)`` for rows of full scores."""
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    counts = (neg >= pos[:, None]).sum(axis=1)
    lhs = _neg_log_ndcg_from_counts(counts)
    cce = batch_loss(LossKind.CCE, pos, neg)
    bpr = batch_loss(LossKind.BPR, pos, neg)
    bce = batch_loss(LossKind.BCE, pos, neg)
    applies = pos >= 0
    return lhs <= cce + SLACK, cce <= bpr + SLACK, bpr <= bce + SLACK, applies


def sampled_bounds_batch(pos: np.ndarray, neg: np.ndarray):
    """Boolean arrays ``(bpr_ok, bce_ok, cce_ok)`` for rows of sampled scores."""
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    gamma = (neg >= pos[:, None]).sum(axis=1)
    gamma0 = (neg >= 0).sum(axis=1)
    bpr = batch_loss(LossKind.BPR, pos, neg)
    bce = batch_loss(LossKind.BCE, pos, neg)
    cce = batch_loss(LossKind.CCE, pos, neg)
    with np.errstate(divide="ignore"):
        cce_rhs = np.where(gamma >= 1, np.log(np.maximum(gamma, 1)), -np.inf)
    return bpr >= gamma * LN2 - SLACK, bce >= gamma0 * LN2 - SLACK, cce >= cce_rhs - SLACK


def verify_full_chain(scores: ScoreSet) -> ChainCheck:
    a, b, c, applies = full_chain_batch(np.array([scores.positive_score]), scores.negative_scores[None, :])
    return ChainCheck(bool(a[0]), bool(b[0]), bool(c[0]) if applies[0] else None)


def verify_sampled_lower_bounds(scores: ScoreSet) -> LowerBoundCheck:
    a, b, c = sampled_bounds_batch(np.array([scores.positive_score]), scores.negative_scores[None, :])
    return LowerBoundCheck(bool(a[0]), bool(b[0]), bool(c[0]))


# -- fuzzing ---------------------------------------------------------------------


def generate_scores(
    generator: str,
    rng: np.random.Generator,
    batch: int,
    k: int,
    nonneg_positive: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Random ``(pos (B,), neg (B, k))`` score rows.

    ``near_tie`` rows copy the positive score (and exact zeros) into many
    negatives, to exercise the ``>=`` boundary of the counting sets.
    """
    if generator == "uniform":
        pos = rng.uniform(-5, 5, batch)
    elif generator == "gaussian":
        pos = rng.normal(0, 2, batch)
    elif generator == "near_tie":
        pos = np.where(rng.random(batch) < 0.2, 0.0, rng.uniform(-3, 3, batch))
    else:
        raise InvalidInputError(f"unknown score generator {generator!r}; expected one of {GENERATORS}")
    if nonneg_positive:
        pos = np.abs(pos)
    if generator == "uniform":
        neg = rng.uniform(-5, 5, (batch, k))
    elif generator == "gaussian":
        neg = rng.normal(0, 2, (batch, k))
    else:
        neg = rng.uniform(-3, 3, (batch, k))
        choice = rng.random((batch, k))
        jitter = pos[:, None] + rng.normal(0, 1e-12, (batch, k))
        neg = np.where(choice < 0.4, pos[:, None], neg)
        neg = np.where((choice >= 0.4) & (choice < 0.55), 0.0, neg)
        neg = np.where((choice >= 0.55) & (choice < 0.65), jitter, neg)
    return pos, neg


@dataclass
class FuzzResult:
    name: str
    checked: int = 0
    failures: int = 0
    counterexample: Optional[ScoreSet] = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.failures == 0


def _fuzz(name, n_sets, seed, stream, generators, max_k, nonneg, sampled, check) -> FuzzResult:
    if n_sets < 1:
        raise InvalidInputError("number of fuzzed score sets must be >= 1")
    result = FuzzResult(name)
    rng = make_rng(seed, stream)
    batch = 2000
    gi = 0
    while result.checked < n_sets:
        b = min(batch, n_sets - result.checked)
        gen = generators[gi % len(generators)]
        gi += 1
        k = int(rng.integers(1, max_k + 1))
        pos, neg = generate_scores(gen, rng, b, k, nonneg_positive=nonneg)
        bad, labels = check(pos, neg)
        result.checked += b
        nbad = int(bad.sum())
        if nbad:
            result.failures += nbad
            if result.counterexample is None:
                row = int(np.flatnonzero(bad)[0])
                result.counterexample = ScoreSet(pos[row], neg[row], is_sampled=sampled)
                result.detail = f"generator={gen} K={k} failed: {labels(row)}"
    return result


def fuzz_full_chain(
    n_sets: int,
    seed: int = 0,
    stream: int = 0,
    generators: Sequence[str] = GENERATORS,
    max_k: int = 50,
    nonneg_positive: bool = True,
) -> FuzzResult:
    """Check the full-loss chain on ``n_sets`` random full score sets."""

    def check(pos, neg):
        a, b, c, applies = full_chain_batch(pos, neg)
        c = c | ~applies
        names = ("-log ndcg <= cce", "cce <= bpr", "bpr <= bce")
        return ~(a & b & c), lambda i: [n for n, ok in zip(names, (a[i], b[i], c[i])) if not ok]

    return _fuzz("full_chain", n_sets, seed, stream, list(generators), max_k, nonneg_positive, False, check)


def fuzz_sampled_lower_bounds(
    n_sets: int,
    seed: int = 0,
    stream: int = 1,
    generators: Sequence[str] = GENERATORS,
    max_k: int = 100,
) -> FuzzResult:
    """Check the three sampled-loss lower bounds on ``n_sets`` random sampled sets."""

    def check(pos, neg):
        a, b, c = sampled_bounds_batch(pos, neg)
        names = ("bpr >= |G| ln2", "bce >= |G0| ln2", "cce >= ln|G|")
        return ~(a & b & c), lambda i: [n for n, ok in zip(names, (a[i], b[i], c[i])) if not ok]

    return _fuzz("sampled_lower_bounds", n_sets, seed, stream, list(generators), max_k, False, True, check)


def fuzz_k1_equivalence(n_sets: int, seed: int = 0, stream: int = 2) -> FuzzResult:
    """BPR and CCE must agree bitwise on single-negative score sets."""

    def check(pos, neg):
        bad = batch_loss(LossKind.BPR, pos, neg) != batch_loss(LossKind.CCE, pos, neg)
        return bad, lambda i: ["bpr == cce"]

    return _fuzz("k1_equivalence", n_sets, seed, stream, ["uniform", "gaussian"], 1, False, True, check)


def fuzz_gradient_signs(n_sets: int, bound: float = 10.0, seed: int = 0, stream: int = 3, max_k: int = 50) -> FuzzResult:
    """Inside ``[-S, S]`` every loss has ``dl/ds+ < 0`` and ``dl/ds_i > 0``."""
    if not bound > 0:
        raise InvalidInputError("score bound S must be positive")
    result = FuzzResult("gradient_signs")
    rng = make_rng(seed, stream)
    while result.checked < n_sets:
        b = min(2000, n_sets - result.checked)
        k = int(rng.integers(1, max_k + 1))
        pos = rng.uniform(-bound, bound, b)
        neg = rng.uniform(-bound, bound, (b, k))
        bad = np.zeros(b, dtype=bool)
        which = [[] for _ in range(b)]
        for kind in LossKind:
            d_pos, d_neg = batch_gradient(kind, pos, neg)
            wrong = ~((d_pos < 0) & np.all(d_neg > 0, axis=1))
            for i in np.flatnonzero(wrong).tolist():
                which[i].append(kind.value)
            bad |= wrong
        result.checked += b
        if bad.any():
            result.failures += int(bad.sum())
            if result.counterexample is None:
                row = int(np.flatnonzero(bad)[0])
                result.counterexample = ScoreSet(pos[row], neg[row], is_sampled=True)
                result.detail = f"K={k} S={bound} wrong gradient sign for {which[row]}"
    return result


# -- Monte Carlo -----------------------------------------------------------------


@dataclass(frozen=True)
class BoundRow:
    loss: str
    metric: str
    trials: int
    frequency: float
    theoretical_bound: float
    std_err: float
    lemma_passes: int

    @property
    def ok(self) -> bool:
        return self.frequency >= self.theoretical_bound - 3.0 * self.std_err

    def as_csv(self) -> dict:
        return {
            "loss": self.loss,
            "metric": self.metric,
            "trials": self.trials,
            "frequency": repr(self.frequency),
            "theoretical_bound": repr(self.theoretical_bound),
            "std_err": repr(self.std_err),
        }


@dataclass
class BoundReport:
    population: int
    k: int
    trials: int
    true_rank: int
    gamma: int
    gamma0: int
    generator: str = "custom"
    rows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.ok and r.lemma_passes == r.trials for r in self.rows)


def make_scenario(
    population: int,
    rank: int,
    gamma0: Optional[int] = None,
    profile: str = "tight",
    rng: Optional[np.random.Generator] = None,
) -> ScoreSet:
    """Full score set with a given true rank and count of non-negative negatives.

    ``tight`` puts negatives exactly on the thresholds (ties at ``s+`` and at
    0, everything else far below) so the sampled losses sit close to their
    lower bounds; ``spread`` draws them at random inside each band.
    """
    gamma = rank - 1
    gamma0 = gamma if gamma0 is None else gamma0
    if not 0 <= gamma <= population or not gamma <= gamma0 <= population:
        raise InvalidInputError(f"need 0 <= rank-1 <= gamma0 <= population, got {rank=}, {gamma0=}, {population=}")
    n_mid, n_low = gamma0 - gamma, population - gamma0
    if profile == "tight":
        pos = 30.0
        high, mid, low = np.full(gamma, pos), np.zeros(n_mid), np.full(n_low, -60.0)
    elif profile == "spread":
        pos = 0.5
        rng = rng if rng is not None else make_rng(0, 0)
        high = rng.uniform(pos, pos + 3.0, gamma)
        mid = rng.uniform(0.0, pos, n_mid)
        low = rng.uniform(-3.0, -0.01, n_low)
    else:
        raise InvalidInputError(f"unknown scenario profile {profile!r}")
    return ScoreSet(pos, np.concatenate([high, mid, low]))


def monte_carlo_bound_check(
    full_scores: ScoreSet,
    config: SamplerConfig,
    metric: Metric | str,
    trials: int,
    stream_index: int = 0,
    generator: str = "custom",
) -> BoundReport:
    """Empirical ``P(-log metric(r+) <= sampled loss)`` for each loss vs. its lower bound."""
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    if full_scores.is_sampled:
        raise InvalidInputError("full_scores must cover the whole negative population")
    metric = Metric.parse(metric)
    negs = full_scores.negative_scores
    n = negs.size
    if config.k > n:
        raise InvalidInputError(f"k={config.k} exceeds population size {n}")
    rank = compute_rank(full_scores)
    counts = compute_gamma_counts(full_scores)
    target = neg_log_metric(rank, metric)
    rng = make_rng(config.seed, stream_index)

    hits = {kind: 0 for kind in LossKind}
    lemma = {kind: 0 for kind in LossKind}
    chunk = max(1, min(trials, (1 << 21) // config.k))
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        idx = draw_index_batch(n, config.k, b, rng)
        neg = negs[idx]
        pos = np.full(b, full_scores.positive_score)
        bpr_ok, bce_ok, cce_ok = sampled_bounds_batch(pos, neg)
        for kind, ok in ((LossKind.BPR, bpr_ok), (LossKind.BCE, bce_ok), (LossKind.CCE, cce_ok)):
            hits[kind] += int(np.count_nonzero(target <= batch_loss(kind, pos, neg)))
            lemma[kind] += int(np.count_nonzero(ok))
        done += b

    report = BoundReport(n, config.k, trials, int(rank), counts.gamma_k, counts.gamma0_k, generator)
    for kind in (LossKind.BCE, LossKind.BPR, LossKind.CCE):
        successes = counts.gamma0_k if kind is LossKind.BCE else counts.gamma_k
        query = BoundProbabilityQuery(HypergeomParams(n, successes, config.k), rank, metric, kind)
        bound = float(bound_probability(query).lower_bound)
        freq = hits[kind] / trials
        # Standard error under the null "frequency == bound"; the plug-in
        # estimate collapses to 0 when a rare event is never observed.
        se = math.sqrt(bound * (1.0 - bound) / trials)
        report.rows.append(BoundRow(kind.value, metric.value, trials, freq, bound, se, lemma[kind]))
    return report


# -- bound surfaces ----------------------------------------------------------------


def bound_surface(
    population: int,
    ks: Iterable[int],
    ranks: Iterable[int],
    metric: Metric | str,
    loss: LossKind | str,
    gamma0: Optional[int] = None,
    exact: Optional[bool] = None,
) -> list:
    """Grid of bound probabilities, one row per K and one column per rank.

    BCE cells use ``gamma0`` non-negative negatives; when it is ``None`` each
    cell uses ``rank - 1``, the smallest value compatible with ``s+ >= 0``.
    """
    ks, ranks = list(ks), list(ranks)
    if not ks or not ranks:
        raise InvalidInputError("K and rank ranges must be non-empty")
    for k in ks:
        if int(k) != k or not 1 <= k <= population:
            raise InvalidInputError(f"K={k} outside 1..{population}")
    for r in ranks:
        if int(r) != r or not 1 <= r <= population + 1:
            raise InvalidInputError(f"rank={r} outside 1..{population + 1}")
    if gamma0 is not None and not 0 <= gamma0 <= population:
        raise InvalidInputError(f"gamma0={gamma0} outside 0..{population}")
    loss = LossKind.parse(loss)
    metric = Metric.parse(metric)
    grid = []
    for k in ks:
        row = []
        for r in ranks:
            if loss is LossKind.BCE:
                m = r - 1 if gamma0 is None else gamma0
            else:
                m = r - 1
            query = BoundProbabilityQuery(HypergeomParams(population, m, k), r, metric, loss)
            row.append(bound_probability(query, exact=exact))
        grid.append(row)
    return grid


def surface_rows(population, ks, ranks, metric, loss, gamma0=None) -> list[dict]:
    ks, ranks = list(ks), list(ranks)
    grid = bound_surface(population, ks, ranks, metric, loss, gamma0)
    loss, metric = LossKind.parse(loss).value, Metric.parse(metric).value
    rows = []
    for k, row in zip(ks, grid):
        for r, cell in zip(ranks, row):
            rows.append({"K": k, "r_plus": r, "loss": loss, "metric": metric, "lower_bound": repr(float(cell.lower_bound))})
    return rows


def write_csv(path: Path | str, fields: Sequence[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def write_report_csv(path: Path | str, reports: Iterable[BoundReport]) -> None:
    write_csv(path, REPORT_FIELDS, (row.as_csv() for rep in reports for row in rep.rows))
