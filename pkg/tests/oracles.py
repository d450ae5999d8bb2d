"""Independent reference implementations used only by the tests.

Nothing here imports from ``recloss``: each oracle recomputes its quantity
from first principles (subset enumeration, arbitrary precision, brute force).
"""
from __future__ import annotations

import itertools
from collections import Counter
from fractions import Fraction

import mpmath

mpmath.mp.dps = 50


def enumerate_pmf(n: int, m: int, k: int) -> dict:
    """Success-count distribution of a uniform k-subset of n items (the first m are successes).

    Literal enumeration of every subset; only use for small n.
    """
    counts = Counter(sum(1 for i in subset if i < m) for subset in itertools.combinations(range(n), k))
    total = sum(counts.values())
    return {x: Fraction(c, total) for x, c in counts.items()}


def subset_count_table(n: int, m: int) -> list:
    """``table[k][x]`` = number of k-subsets holding exactly x successes.

    Builds the generating polynomial prod_i (1 + y z^[i is a success]) one
    item at a time, i.e. it counts subsets by recursion over the items rather
    than by a closed form.
    """
    table = [[0] * (m + 1) for _ in range(n + 1)]
    table[0][0] = 1
    for item in range(n):
        success = item < m
        for k in range(item + 1, 0, -1):
            row, prev = table[k], table[k - 1]
            for x in range(m, -1, -1):
                src = x - 1 if success else x
                if src >= 0 and prev[src]:
                    row[x] += prev[src]
    return table


def dp_pmf(n: int, m: int, k: int, table: list | None = None) -> dict:
    table = subset_count_table(n, m) if table is None else table
    total = sum(table[k])
    return {x: Fraction(c, total) for x, c in enumerate(table[k]) if c}


def tail_at_least(pmf: dict, x: int) -> Fraction:
    return sum((p for v, p in pmf.items() if v >= x), Fraction(0))


def mp_softplus(x):
    return mpmath.log1p(mpmath.exp(mpmath.mpf(x)))


def mp_loss(kind: str, pos: float, negs) -> mpmath.mpf:
    """Loss straight from its defining formula at 50 significant digits."""
    pos = mpmath.mpf(pos)
    negs = [mpmath.mpf(v) for v in negs]
    if kind == "bce":
        return mp_softplus(-pos) + sum(mp_softplus(v) for v in negs)
    if kind == "bpr":
        return sum(mp_softplus(v - pos) for v in negs)
    if kind == "cce":
        return -mpmath.log(mpmath.exp(pos) / (mpmath.exp(pos) + sum(mpmath.exp(v) for v in negs)))
    raise ValueError(kind)


def brute_rank(pos: float, negs) -> int:
    return 1 + sum(1 for v in negs if v >= pos)
