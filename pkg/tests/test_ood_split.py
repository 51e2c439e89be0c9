from __future__ import annotations

import numpy as np
import pytest

from core.errors import BadParameter, LabelAbsent
from core.models import Dataset
from data.ood_split import build_label_map, make_ood_split


def _data(labels, k=3):
    labels = np.asarray(labels)
    features = np.linspace(0.0, 1.0, len(labels))[:, None]
    return Dataset(features, labels, k)


def test_label_map_skips_held_out():
    assert build_label_map(4, 1) == {0: 0, 2: 1, 3: 2}


def test_split_removes_and_remaps():
    train = _data([0, 1, 2, 1, 2, 0])
    test = _data([2, 1, 0, 1])
    split = make_ood_split(train, test, 1)

    assert split.train.num_classes == 2
    assert split.train.labels.tolist() == [0, 1, 1, 0]
    assert split.test_in.labels.tolist() == [1, 0]
    assert split.test_ood.labels.tolist() == [1, 1]
    assert split.test_ood.num_classes == 3
    assert split.inverse_label_map == {0: 0, 1: 2}


def test_split_keeps_features_aligned():
    train = _data([0, 1, 2])
    test = _data([2, 1, 0])
    split = make_ood_split(train, test, 2)
    # train rows 0 and 1 survive
    assert np.allclose(split.train.features[:, 0], [0.0, 0.5])
    assert np.allclose(split.test_ood.features[:, 0], [0.0])


def test_groups_partition_the_test_set():
    train = _data([0, 1, 2, 0])
    test = _data([0, 1, 2, 2, 1])
    split = make_ood_split(train, test, 2)
    assert len(split.test_in) + len(split.test_ood) == len(test)


def test_label_absent():
    train = _data([0, 1, 0], k=4)
    test = _data([1, 0], k=4)
    with pytest.raises(LabelAbsent):
        make_ood_split(train, test, 3)


def test_class_count_mismatch():
    with pytest.raises(BadParameter):
        make_ood_split(_data([0, 1], k=2), _data([0, 1], k=3), 0)
