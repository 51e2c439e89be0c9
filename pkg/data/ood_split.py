from __future__ import annotations

"""
Leave-one-label-out splits.

All samples of the held-out label are removed from the training set; the
network is trained on the remaining K-1 classes (labels remapped to a
contiguous 0..K-2 range so the softmax head has exactly K-1 outputs). The
test set is partitioned into in-distribution samples (remapped the same way)
and out-of-distribution samples (held-out label only, original label kept).
"""

import logging
from typing import Dict

import numpy as np

from core.errors import BadParameter, LabelAbsent
from core.models import Dataset, OodSplit

logger = logging.getLogger(__name__)


def build_label_map(num_classes: int, held_out_label: int) -> Dict[int, int]:
    """{original -> remapped} for every label except the held-out one, ascending."""
    remaining = [k for k in range(num_classes) if k != held_out_label]
    return {orig: new for new, orig in enumerate(remaining)}


def _remap(data: Dataset, keep: np.ndarray, label_map: Dict[int, int]) -> Dataset:
    lut = np.full(data.num_classes, -1, dtype=np.int64)
    for orig, new in label_map.items():
        lut[orig] = new
    labels = lut[data.labels[keep]]
    return Dataset(data.features[keep], labels, len(label_map))


def make_ood_split(train: Dataset, test: Dataset, held_out_label: int) -> OodSplit:
    """
    Build the OodSplit for one held-out label.

    Raises
    ------
    LabelAbsent  : the label occurs in neither dataset.
    BadParameter : the two datasets disagree on K or on input dimension.
    """
    if train.num_classes != test.num_classes:
        raise BadParameter(
            f"train has {train.num_classes} classes but test has {test.num_classes}"
        )
    if len(train) and len(test) and train.input_dim != test.input_dim:
        raise BadParameter(f"input dimension differs: {train.input_dim} vs {test.input_dim}")

    held = int(held_out_label)
    in_train = train.labels == held
    in_test = test.labels == held
    if not in_train.any() and not in_test.any():
        raise LabelAbsent(f"label {held} occurs in neither the training nor the test set")

    label_map = build_label_map(train.num_classes, held)
    split = OodSplit(
        train=_remap(train, ~in_train, label_map),
        test_in=_remap(test, ~in_test, label_map),
        test_ood=test.subset(in_test),
        held_out_label=held,
        label_map=label_map,
    )
    logger.info(
        "held out label %d: %d train, %d test in-distribution, %d test OOD "
        "(%d training samples removed)",
        held, len(split.train), len(split.test_in), len(split.test_ood), int(in_train.sum()),
    )
    return split
