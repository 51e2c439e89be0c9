from __future__ import annotations

"""
Synthetic blob datasets: isotropic unit-variance Gaussian clusters whose
centers are pairwise at least `separation` apart, min-max rescaled to [0, 1].

Used as a fast stand-in for MNIST in tests and smoke runs.
"""

import numpy as np

from core.errors import BadParameter
from core.models import Dataset

# Draws per attempt when placing centers by rejection.
_MAX_CENTER_TRIES = 10_000


def _place_centers(rng: np.random.Generator, k: int, dim: int, separation: float) -> np.ndarray:
    """
    Rejection-sample k centers with pairwise distance >= separation.

    Candidates are drawn uniformly in a cube whose side grows with k so
    placement stays feasible in one dimension as well.
    """
    side = max(separation, 1.0) * k
    centers = np.empty((0, dim))
    tries = 0
    while centers.shape[0] < k:
        cand = rng.uniform(-side, side, size=dim)
        if centers.shape[0] == 0 or np.min(np.linalg.norm(centers - cand, axis=1)) >= separation:
            centers = np.vstack([centers, cand])
        tries += 1
        if tries > _MAX_CENTER_TRIES:
            side *= 2.0
            tries = 0
    return centers


def synth_blobs(
    num_classes: int,
    dim: int,
    per_class: int,
    separation: float,
    seed: int,
) -> Dataset:
    """
    Deterministic blob dataset with num_classes * per_class samples,
    ordered class by class.

    Raises
    ------
    BadParameter : num_classes < 2, per_class < 1, dim < 1 or separation < 0.
    """
    if num_classes < 2:
        raise BadParameter(f"num_classes must be >= 2, got {num_classes}")
    if per_class < 1:
        raise BadParameter(f"per_class must be >= 1, got {per_class}")
    if dim < 1:
        raise BadParameter(f"dim must be >= 1, got {dim}")
    if separation < 0:
        raise BadParameter(f"separation must be >= 0, got {separation}")

    rng = np.random.default_rng(seed)
    centers = _place_centers(rng, num_classes, dim, float(separation))

    points = np.concatenate(
        [centers[k] + rng.standard_normal((per_class, dim)) for k in range(num_classes)]
    )
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)

    lo = points.min(axis=0)
    span = points.max(axis=0) - lo
    span[span == 0.0] = 1.0
    features = np.clip((points - lo) / span, 0.0, 1.0)
    return Dataset(features, labels, num_classes)


def train_test_blobs(
    num_classes: int,
    dim: int,
    per_class_train: int,
    per_class_test: int,
    separation: float,
    seed: int,
) -> tuple[Dataset, Dataset]:
    """
    One blob draw split into train and test parts that share centers and the
    same min-max rescaling. The first per_class_train points of every class
    go to train.
    """
    full = synth_blobs(num_classes, dim, per_class_train + per_class_test, separation, seed)
    per_class = per_class_train + per_class_test
    position = np.arange(len(full)) % per_class
    is_train = position < per_class_train
    return full.subset(is_train), full.subset(~is_train)
