from __future__ import annotations

"""
Numerical substrate: Cholesky factorization, Gaussian fitting and
log-density, percentiles.

Matrices and vectors are plain float64 numpy arrays. Everything here is a
pure function of its inputs; a fitted GaussianDensity is immutable and can be
read from any number of threads or processes.

The density is the standard multivariate normal

    log p(x) = -1/2 * (d*log(2*pi) + log det S + (x - mu)^T S^-1 (x - mu))

with S the ridge-regularized sample covariance. The quadratic form is
evaluated with a triangular solve against the lower Cholesky factor; no
explicit inverse is ever formed.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np
from scipy import linalg as sp_linalg

from core.errors import (
    BadParameter,
    DegenerateSampleCount,
    DimensionMismatch,
    EmptyInput,
    NotPositiveDefinite,
)

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))

# Absolute floor on the ridge; keeps all-constant sample blocks factorizable.
RIDGE_FLOOR = 1e-10
DEFAULT_RIDGE_SCALE = 1e-6
MAX_RIDGE_STEPS = 20

ArrayLike = Union[np.ndarray, Iterable[float]]


# =============================================================================
# GaussianDensity
# =============================================================================

@dataclass(frozen=True)
class GaussianDensity:
    """
    Multivariate normal fitted to one block of latent vectors.

    Attributes
    ----------
    mean       : (d,) sample mean.
    chol_lower : (d, d) lower factor L of cov + reg_lambda * I.
    log_det    : log-determinant of the regularized covariance,
                 2 * sum(log diag L).
    reg_lambda : ridge added to the diagonal before factorizing.
    """

    mean: np.ndarray
    chol_lower: np.ndarray
    log_det: float
    reg_lambda: float

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    @property
    def covariance(self) -> np.ndarray:
        """Regularized covariance rebuilt from the factor."""
        return self.chol_lower @ self.chol_lower.T

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "log_det": self.log_det,
            "reg_lambda": self.reg_lambda,
        }


# =============================================================================
# Factorization
# =============================================================================

def cholesky(a: np.ndarray) -> np.ndarray:
    """
    Lower-triangular factor L with L @ L.T == a.

    Raises
    ------
    DimensionMismatch   : a is not square or not symmetric (1e-9 relative).
    NotPositiveDefinite : a pivot <= 0 was met.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"cholesky needs a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite("matrix has non-finite entries")

    scale = max(float(np.max(np.abs(a))) if a.size else 0.0, 1.0)
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-9 * scale):
        raise DimensionMismatch("cholesky needs a symmetric matrix")

    try:
        return sp_linalg.cholesky(a, lower=True, check_finite=False)
    except sp_linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def _as_samples(samples: ArrayLike) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionMismatch(f"samples must be an n x d matrix, got shape {x.shape}")
    return x


# =============================================================================
# Gaussian fitting & density
# =============================================================================

def fit_gaussian(samples: ArrayLike, ridge_scale: float = DEFAULT_RIDGE_SCALE) -> GaussianDensity:
    """
    Fit mean and ridge-regularized covariance to an (n, d) sample block.

    The covariance uses the unbiased 1/(n-1) estimator, then

        reg_lambda = max(ridge_scale * trace(cov) / d, RIDGE_FLOOR)

    is added to the diagonal. If rounding still leaves a non-positive pivot
    (very rank-deficient blocks), the ridge is raised tenfold until the
    factorization succeeds; the final value is recorded on the result.
    """
    x = _as_samples(samples)
    n, d = x.shape
    if n < 2:
        raise DegenerateSampleCount(f"need at least 2 samples to fit a Gaussian, got {n}")
    if d < 1:
        raise DimensionMismatch("samples must have at least one column")
    if ridge_scale < 0:
        raise BadParameter(f"ridge_scale must be >= 0, got {ridge_scale}")
    if not np.all(np.isfinite(x)):
        raise NotPositiveDefinite("samples contain non-finite values")

    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))

    reg = max(ridge_scale * float(np.trace(cov)) / d, RIDGE_FLOOR)
    eye = np.eye(d)
    for _ in range(MAX_RIDGE_STEPS):
        try:
            chol = cholesky(cov + reg * eye)
            break
        except NotPositiveDefinite:
            logger.debug("ridge %.3e insufficient for d=%d block, raising", reg, d)
            reg *= 10.0
    else:
        raise NotPositiveDefinite(f"no factorization after {MAX_RIDGE_STEPS} ridge increases (last {reg:.3e})")

    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return GaussianDensity(mean=mean, chol_lower=chol, log_det=log_det, reg_lambda=float(reg))


def mahalanobis_sq(g: GaussianDensity, x: ArrayLike) -> Union[float, np.ndarray]:
    """Squared Mahalanobis distance of x (d,) or rows of x (n, d) to g."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    rows = arr[None, :] if single else arr
    if rows.ndim != 2 or rows.shape[1] != g.dim:
        raise DimensionMismatch(f"expected vectors of dimension {g.dim}, got shape {arr.shape}")

    z = sp_linalg.solve_triangular(
        g.chol_lower, (rows - g.mean).T, lower=True, check_finite=False
    )
    m2 = np.sum(z * z, axis=0)
    return float(m2[0]) if single else m2


def log_density(g: GaussianDensity, x: ArrayLike) -> Union[float, np.ndarray]:
    """
    Log-density of x under g. Accepts one vector or an (n, d) batch.

    Raises
    ------
    DimensionMismatch : x does not have g's dimension.
    """
    m2 = mahalanobis_sq(g, x)
    return -0.5 * (g.dim * LOG_2PI + g.log_det + m2)


# =============================================================================
# Percentiles
# =============================================================================

def percentile(values: ArrayLike, p: float) -> float:
    """
    Linear-interpolation percentile: sort ascending, interpolate at
    fractional index (n - 1) * p / 100.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInput("percentile of an empty collection")
    if not 0.0 <= p <= 100.0:
        raise BadParameter(f"percentile p must lie in [0, 100], got {p}")
    return float(np.percentile(v, p, method="linear"))
