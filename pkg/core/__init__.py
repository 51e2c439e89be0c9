# core/__init__.py

"""
Core domain models, errors and the Gaussian numerical substrate.

Public API:
- Dataset, OodSplit, LayerSpec, RuleResult
- GaussianDensity, cholesky, fit_gaussian, log_density, mahalanobis_sq, percentile
- LatentUQError (root of every toolkit error)
"""

from .errors import LatentUQError
from .models import (
    Dataset,
    OodSplit,
    LayerSpec,
    RuleResult,
)
from .linalg import (
    GaussianDensity,
    cholesky,
    fit_gaussian,
    log_density,
    mahalanobis_sq,
    percentile,
)

__all__ = [
    "LatentUQError",
    "Dataset",
    "OodSplit",
    "LayerSpec",
    "RuleResult",
    "GaussianDensity",
    "cholesky",
    "fit_gaussian",
    "log_density",
    "mahalanobis_sq",
    "percentile",
]
