"""Hypergeometric PMF/CDF and the sampled-loss bound probabilities.

Drawing K negatives uniformly without replacement from a population of N
negatives, M of which meet a condition, the number of drawn negatives meeting
it is Hypergeometric(N, M, K).

Two evaluation paths:

* exact: :class:`fractions.Fraction` built from big-integer binomials, used
  for ``N <= EXACT_LIMIT`` and whenever ``exact=True`` is requested;
* float: a normalised ratio recurrence for larger populations (bound
  surfaces).

Bound probabilities
-------------------
A sampled loss upper-bounds ``-log metric(r+)`` whenever the relevant drawn
count reaches an evaluation point ``rho``. The lower bound reported here is
``1 - CDF(floor(rho))`` with

==========  ==================  ===========
metric      BPR / BCE           CCE
==========  ==================  ===========
ndcg        log2(log2(1 + r+))  log2(1 + r+)
mrr         log2(r+)            r+
==========  ==================  ===========

BPR and CCE use the count of negatives scoring at or above the positive
(``M = r+ - 1``); BCE uses the count of non-negative negatives, which the
caller supplies. The CDF is evaluated at the floored point; since
``1 - CDF(floor(rho)) <= P(X >= rho)`` this is always a valid lower bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Union

from .core import InvalidInputError, Rank
from .losses import LossKind
from .metrics import Metric

EXACT_LIMIT = 10_000

Number = Union[float, Fraction]


@dataclass(frozen=True)
class HypergeomParams:
    population: int
    successes: int
    draws: int

    def __post_init__(self) -> None:
        for name in ("population", "successes", "draws"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or v < 0:
                raise InvalidInputError(f"{name} must be a non-negative integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.successes > self.population:
            raise InvalidInputError(f"successes ({self.successes}) exceed population ({self.population})")
        if self.draws > self.population:
            raise InvalidInputError(f"draws ({self.draws}) exceed population ({self.population})")

    @property
    def support(self) -> tuple[int, int]:
        n, m, k = self.population, self.successes, self.draws
        return max(0, k - (n - m)), min(k, m)


@dataclass(frozen=True)
class BoundProbabilityQuery:
    params: HypergeomParams
    rank: int
    metric: Metric
    loss: LossKind

    def __post_init__(self) -> None:
        object.__setattr__(self, "rank", Rank(self.rank))
        object.__setattr__(self, "metric", Metric.parse(self.metric))
        object.__setattr__(self, "loss", LossKind.parse(self.loss))
        if self.loss is not LossKind.BCE and self.params.successes != self.rank - 1:
            raise InvalidInputError(
                f"{self.loss.value} bound needs successes = rank - 1 "
                f"({self.rank - 1}), got {self.params.successes}"
            )
        if self.rank - 1 > self.params.population:
            raise InvalidInputError(f"rank {self.rank} impossible with {self.params.population} negatives")


@dataclass(frozen=True)
class BoundProbability:
    lower_bound: Number
    evaluation_point: float
    floored_point: int


# -- exact path ---------------------------------------------------------------


@lru_cache(maxsize=1 << 18)
def _cdf_numerator(n: int, m: int, k: int, x: int) -> int:
    lo, hi = max(0, k - (n - m)), min(k, m)
    return sum(math.comb(m, i) * math.comb(n - m, k - i) for i in range(lo, min(x, hi) + 1))


def pmf_exact(params: HypergeomParams, x: int) -> Fraction:
    n, m, k = params.population, params.successes, params.draws
    lo, hi = params.support
    if not lo <= x <= hi:
        return Fraction(0)
    return Fraction(math.comb(m, x) * math.comb(n - m, k - x), math.comb(n, k))


def cdf_exact(params: HypergeomParams, x: int) -> Fraction:
    lo, hi = params.support
    if x < lo:
        return Fraction(0)
    if x >= hi:
        return Fraction(1)
    n, m, k = params.population, params.successes, params.draws
    return Fraction(_cdf_numerator(n, m, k, int(x)), math.comb(n, k))


# -- float path ---------------------------------------------------------------


@lru_cache(maxsize=4096)
def _pmf_table(n: int, m: int, k: int) -> tuple[int, tuple]:
    """``(lo, pmf[lo..hi])`` as floats.

    Walks the ratio ``p(x+1)/p(x) = (m-x)(k-x) / ((x+1)(n-m-k+x+1))`` outward
    from the mode and normalises with ``fsum``. Each value carries only a few
    ulps of error, unlike log-gamma differences whose absolute rounding grows
    with ``n``.
    """
    lo, hi = max(0, k - (n - m)), min(k, m)
    mode = min(hi, max(lo, (k + 1) * (m + 1) // (n + 2)))
    w = [0.0] * (hi - lo + 1)
    w[mode - lo] = 1.0
    for x in range(mode, hi):
        nxt = w[x - lo] * ((m - x) * (k - x)) / ((x + 1) * (n - m - k + x + 1))
        if nxt == 0.0:
            break
        w[x + 1 - lo] = nxt
    for x in range(mode, lo, -1):
        prv = w[x - lo] * (x * (n - m - k + x)) / ((m - x + 1) * (k - x + 1))
        if prv == 0.0:
            break
        w[x - 1 - lo] = prv
    total = math.fsum(w)
    return lo, tuple(v / total for v in w)


def _pmf_float(params: HypergeomParams, x: int) -> float:
    lo, hi = params.support
    if not lo <= x <= hi:
        return 0.0
    lo, table = _pmf_table(params.population, params.successes, params.draws)
    return table[x - lo]


def _cdf_float(params: HypergeomParams, x: int) -> float:
    lo, hi = params.support
    if x < lo:
        return 0.0
    if x >= hi:
        return 1.0
    lo, table = _pmf_table(params.population, params.successes, params.draws)
    # fsum is correctly rounded, so the result stays non-decreasing in x.
    return min(1.0, math.fsum(table[: x - lo + 1]))


def _use_exact(params: HypergeomParams, exact: bool | None) -> bool:
    return params.population <= EXACT_LIMIT if exact is None else exact


def hypergeom_pmf(params: HypergeomParams, x: int, exact: bool | None = None) -> Number:
    """``P(X = x)``; a :class:`Fraction` on the exact path, a float otherwise."""
    if _use_exact(params, exact):
        p = pmf_exact(params, x)
        return p if exact else float(p)
    return _pmf_float(params, x)


def hypergeom_cdf(params: HypergeomParams, x: int, exact: bool | None = None) -> Number:
    """``P(X <= x)``; 0 below the support, 1 at or above its top."""
    x = math.floor(x)
    if _use_exact(params, exact):
        c = cdf_exact(params, x)
        return c if exact else float(c)
    return _cdf_float(params, x)


# -- bound probabilities -------------------------------------------------------


def _floor_log2_log2(value: int) -> int:
    """``floor(log2(log2(value)))`` for integer ``value >= 2``, without rounding error."""
    j = 0
    while 2 ** (2 ** (j + 1)) <= value:
        j += 1
    return j


def evaluation_point(rank: int, metric: Metric | str, loss: LossKind | str) -> tuple[float, int]:
    """``(rho, floor(rho))`` for a (metric, loss) pair; the floor is computed in integers."""
    r = int(Rank(rank))
    metric, loss = Metric.parse(metric), LossKind.parse(loss)
    if metric is Metric.NDCG:
        if loss is LossKind.CCE:
            return math.log2(1 + r), (1 + r).bit_length() - 1
        return math.log2(math.log2(1 + r)), _floor_log2_log2(1 + r)
    if loss is LossKind.CCE:
        return float(r), r
    return math.log2(r), r.bit_length() - 1


def bound_probability(query: BoundProbabilityQuery, exact: bool | None = None) -> BoundProbability:
    """Lower bound on ``P(-log metric(r+) <= sampled loss)``."""
    rho, floored = evaluation_point(query.rank, query.metric, query.loss)
    cdf = hypergeom_cdf(query.params, floored, exact=exact)
    lower = 1 - cdf
    if not isinstance(lower, Fraction):
        lower = min(1.0, max(0.0, lower))
    return BoundProbability(lower, rho, floored)


def worst_case_ordering(
    params_gamma: HypergeomParams,
    gamma0: int,
    rank: int,
    metric: Metric | str,
    exact: bool | None = None,
) -> tuple[BoundProbability, BoundProbability, BoundProbability]:
    """Bound probabilities ``(BCE, BPR, CCE)`` when ``s+ >= 0``.

    Requires ``gamma0 >= params_gamma.successes`` (every negative at or above a
    non-negative positive is itself non-negative). The result always satisfies
    ``BCE >= BPR >= CCE``; a violation raises ``AssertionError``.
    """
    if int(gamma0) != gamma0 or gamma0 < params_gamma.successes:
        raise InvalidInputError(
            f"gamma0 ({gamma0}) must be an integer >= successes ({params_gamma.successes})"
        )
    if gamma0 > params_gamma.population:
        raise InvalidInputError(f"gamma0 ({gamma0}) exceeds population ({params_gamma.population})")
    p0 = HypergeomParams(params_gamma.population, int(gamma0), params_gamma.draws)
    bce = bound_probability(BoundProbabilityQuery(p0, rank, metric, LossKind.BCE), exact)
    bpr = bound_probability(BoundProbabilityQuery(params_gamma, rank, metric, LossKind.BPR), exact)
    cce = bound_probability(BoundProbabilityQuery(params_gamma, rank, metric, LossKind.CCE), exact)
    if not bce.lower_bound >= bpr.lower_bound >= cce.lower_bound:
        raise AssertionError(
            f"ordering violated: BCE={bce.lower_bound}, BPR={bpr.lower_bound}, CCE={cce.lower_bound}"
        )
    return bce, bpr, cce
