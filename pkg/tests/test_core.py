import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import brute_rank
from recloss.core import (
    GammaCounts,
    InvalidInputError,
    Rank,
    ScoreSet,
    compute_gamma_counts,
    compute_rank,
)

finite = st.floats(-50, 50, allow_nan=False)


class TestScoreSet:
    def test_empty_negatives_rejected(self):
        with pytest.raises(InvalidInputError):
            ScoreSet.of(0.0, [])

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(InvalidInputError):
            ScoreSet.of(0.0, [0.1, bad])
        with pytest.raises(InvalidInputError):
            ScoreSet.of(bad, [0.1])

    def test_negatives_are_read_only(self):
        s = ScoreSet.of(0.0, [1.0, 2.0])
        with pytest.raises(ValueError):
            s.negative_scores[0] = 5.0

    def test_k(self):
        assert ScoreSet.of(0.0, [1.0, 2.0, 3.0], sampled=True).k == 3


class TestRank:
    def test_rejects_zero(self):
        with pytest.raises(InvalidInputError):
            Rank(0)

    def test_value(self):
        assert Rank(4).value == 4


class TestComputeRank:
    @pytest.mark.parametrize(
        "pos, negs, expected",
        [
            (0.5, [0.5, 0.2, 0.9], 3),
            (1.0, [0.0, 0.0], 1),
            (0.0, [0.0] * 7, 8),
        ],
    )
    def test_examples(self, pos, negs, expected):
        assert compute_rank(ScoreSet.of(pos, negs)) == expected

    def test_non_finite_input(self):
        with pytest.raises(InvalidInputError):
            compute_rank(ScoreSet.of(0.0, [float("nan")]))

    @given(finite, st.lists(finite, min_size=1, max_size=30))
    def test_matches_brute_force_and_bounds(self, pos, negs):
        r = compute_rank(ScoreSet.of(pos, negs))
        assert r == brute_rank(pos, negs)
        assert 1 <= r <= len(negs) + 1


class TestGammaCounts:
    @pytest.mark.parametrize(
        "pos, negs, gk, g0k",
        [
            (0.5, [1.0, -0.2, 0.5], 2, 2),
            (-1.0, [-2.0, -3.0], 0, 0),
            (0.0, [0.0, 0.1, -0.1], 2, 2),
        ],
    )
    def test_examples(self, pos, negs, gk, g0k):
        c = compute_gamma_counts(ScoreSet.of(pos, negs, sampled=True))
        assert (c.gamma_k, c.gamma0_k) == (gk, g0k)
        assert c.population_gamma is None and c.population_gamma0 is None

    def test_population_fields_filled_for_full_sets(self):
        c = compute_gamma_counts(ScoreSet.of(0.5, [1.0, -0.2, 0.5]))
        assert (c.population_gamma, c.population_gamma0) == (2, 2)

    def test_rejects_invalid_counts(self):
        with pytest.raises(InvalidInputError):
            GammaCounts(-1, 0)

    @given(finite, st.lists(finite, min_size=1, max_size=30), st.randoms(use_true_random=False))
    def test_properties(self, pos, negs, rnd):
        s = ScoreSet.of(pos, negs)
        c = compute_gamma_counts(s)
        assert compute_rank(s) == c.gamma_k + 1
        assert c.gamma_k <= s.k and c.gamma0_k <= s.k
        if pos >= 0:
            assert c.gamma_k <= c.gamma0_k
        shuffled = list(negs)
        rnd.shuffle(shuffled)
        p = ScoreSet.of(pos, shuffled)
        assert compute_rank(p) == compute_rank(s)
        c2 = compute_gamma_counts(p)
        assert (c2.gamma_k, c2.gamma0_k) == (c.gamma_k, c.gamma0_k)
