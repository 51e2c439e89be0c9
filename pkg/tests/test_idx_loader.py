from __future__ import annotations

import gzip
import struct

import numpy as np
import pytest

from core.errors import BadMagic, BadParameter, TruncatedFile
from core.models import Dataset
from data.idx_loader import (
    load_idx_dataset,
    load_idx_images,
    load_idx_labels,
    read_idx_images,
    write_idx_dataset,
)


def _images(n, rows, cols, pixels):
    return struct.pack(">4I", 0x803, n, rows, cols) + bytes(pixels)


def _labels(values):
    return struct.pack(">2I", 0x801, len(values)) + bytes(values)


def test_images_are_scaled_to_unit_range():
    raw = _images(2, 2, 2, [0, 255, 51, 102, 255, 0, 0, 0])
    x = load_idx_images(raw)
    assert x.shape == (2, 4)
    assert x.dtype == np.float64
    assert x[0].tolist() == pytest.approx([0.0, 1.0, 0.2, 0.4])
    assert x[1].tolist() == pytest.approx([1.0, 0.0, 0.0, 0.0])


def test_labels_parse():
    assert load_idx_labels(_labels([7, 0, 9])).tolist() == [7, 0, 9]


def test_bad_magic():
    with pytest.raises(BadMagic):
        load_idx_images(_labels([1] * 12))
    with pytest.raises(BadMagic):
        load_idx_labels(_images(1, 1, 1, [0]))


def test_truncated_payload():
    with pytest.raises(TruncatedFile):
        load_idx_images(_images(2, 2, 2, [0, 1, 2]))
    with pytest.raises(TruncatedFile):
        load_idx_labels(b"\x00\x00\x08")


def test_gzip_files_are_read(tmp_path):
    path = tmp_path / "images.idx.gz"
    with gzip.open(path, "wb") as fh:
        fh.write(_images(1, 1, 3, [0, 255, 0]))
    assert read_idx_images(path).tolist() == [[0.0, 1.0, 0.0]]


def test_write_then_load_dataset(tmp_path):
    data = Dataset(np.array([[0.0, 1.0], [1.0, 0.0], [0.2, 0.4]]), np.array([0, 1, 2]), 3)
    write_idx_dataset(data, tmp_path / "x.idx", tmp_path / "y.idx", rows=1, cols=2)
    loaded = load_idx_dataset(tmp_path / "x.idx", tmp_path / "y.idx")
    assert loaded.num_classes == 3
    assert np.allclose(loaded.features, data.features)
    assert loaded.labels.tolist() == [0, 1, 2]


def test_count_mismatch(tmp_path):
    (tmp_path / "x.idx").write_bytes(_images(2, 1, 1, [0, 0]))
    (tmp_path / "y.idx").write_bytes(_labels([0]))
    with pytest.raises(BadParameter):
        load_idx_dataset(tmp_path / "x.idx", tmp_path / "y.idx")
