"""Count-model statistics: offset Poisson GLM, random-intercept Poisson, rank correlation."""

from .glm import (
    DEFAULT_REFERENCES,
    GlmFit,
    ModelSpec,
    RateRatio,
    fit_poisson_glm,
    poisson_irls,
    rate_ratio_interval,
    rate_ratios,
    significance_stars,
)
from .mixed import MixedFit, fit_random_intercept_poisson, marginal_loglik, median_irr
from .normal import Z75, normal_quantile, two_sided_p
from .rank import CorrelationResult, average_ranks, spearman

__all__ = [
    "DEFAULT_REFERENCES",
    "CorrelationResult",
    "GlmFit",
    "MixedFit",
    "ModelSpec",
    "RateRatio",
    "Z75",
    "average_ranks",
    "fit_poisson_glm",
    "fit_random_intercept_poisson",
    "marginal_loglik",
    "median_irr",
    "normal_quantile",
    "poisson_irls",
    "rate_ratio_interval",
    "rate_ratios",
    "significance_stars",
    "spearman",
    "two_sided_p",
]
