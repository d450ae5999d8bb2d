"""Recommendation losses under negative sampling, their metric bounds, and a small trainer."""
from .core import GammaCounts, InvalidInputError, Rank, ScoreSet, compute_gamma_counts, compute_rank
from .hypergeom import (
    BoundProbability,
    BoundProbabilityQuery,
    HypergeomParams,
    bound_probability,
    hypergeom_cdf,
    hypergeom_pmf,
    worst_case_ordering,
)
from .losses import LossGradient, LossKind, ScoreBound, box_minimizer, check_k1_equivalence, loss_gradient, loss_value
from .metrics import Metric, metric_at_k, metric_value, mrr, ndcg
from .sampling import SamplerConfig, make_rng, sample_gamma_count, sample_negatives

__version__ = "0.1.0"

__all__ = [
    "BoundProbability",
    "BoundProbabilityQuery",
    "GammaCounts",
    "HypergeomParams",
    "InvalidInputError",
    "LossGradient",
    "LossKind",
    "Metric",
    "Rank",
    "SamplerConfig",
    "ScoreBound",
    "ScoreSet",
    "bound_probability",
    "box_minimizer",
    "check_k1_equivalence",
    "compute_gamma_counts",
    "compute_rank",
    "hypergeom_cdf",
    "hypergeom_pmf",
    "loss_gradient",
    "loss_value",
    "make_rng",
    "metric_at_k",
    "metric_value",
    "mrr",
    "ndcg",
    "sample_gamma_count",
    "sample_negatives",
    "worst_case_ordering",
]
