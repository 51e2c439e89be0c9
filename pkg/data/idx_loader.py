from __future__ import annotations

"""
IDX (MNIST-style) reader and writer.

Image file layout (big-endian):

    [offset] [type]          [value]           [description]
    0000     32 bit integer  0x00000803 (2051) magic number
    0004     32 bit integer  n                 number of images
    0008     32 bit integer  r                 rows
    0012     32 bit integer  c                 columns
    0016     unsigned byte   ...               n*r*c pixels, row-wise

Label file layout:

    0000     32 bit integer  0x00000801 (2049) magic number
    0004     32 bit integer  n                 number of items
    0008     unsigned byte   ...               n labels

Paths ending in ".gz" are read through gzip transparently.
"""

import gzip
import io
import logging
import struct
from pathlib import Path
from typing import BinaryIO, Optional, Union

import numpy as np

from core.errors import BadMagic, BadParameter, TruncatedFile
from core.models import Dataset

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
PIXEL_SCALE = 255.0

Source = Union[bytes, bytearray, BinaryIO]
PathLike = Union[str, Path]


def _as_stream(source: Source) -> BinaryIO:
    if isinstance(source, (bytes, bytearray)):
        return io.BytesIO(bytes(source))
    return source


def _read_exact(stream: BinaryIO, size: int, what: str) -> bytes:
    data = stream.read(size)
    if data is None or len(data) != size:
        got = 0 if data is None else len(data)
        raise TruncatedFile(f"expected {size} bytes of {what}, got {got}")
    return data


def _read_header(stream: BinaryIO, magic: int, fields: int) -> tuple:
    raw = _read_exact(stream, 4 * (fields + 1), "header")
    values = struct.unpack(f">{fields + 1}I", raw)
    if values[0] != magic:
        raise BadMagic(f"magic number mismatch: expected 0x{magic:08x}, got 0x{values[0]:08x}")
    return values[1:]


# =============================================================================
# Readers
# =============================================================================

def load_idx_images(source: Source) -> np.ndarray:
    """
    Parse an IDX image stream into an (n, r*c) float64 matrix scaled to [0, 1].

    Raises
    ------
    BadMagic      : header magic is not 0x00000803.
    TruncatedFile : header or pixel payload is short.
    """
    stream = _as_stream(source)
    n, rows, cols = _read_header(stream, IDX_IMAGE_MAGIC, 3)
    payload = _read_exact(stream, n * rows * cols, "pixel data")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(n, rows * cols)
    return pixels.astype(np.float64) / PIXEL_SCALE


def load_idx_labels(source: Source) -> np.ndarray:
    """
    Parse an IDX label stream into an int64 array.

    Raises
    ------
    BadMagic      : header magic is not 0x00000801.
    TruncatedFile : header or label payload is short.
    """
    stream = _as_stream(source)
    (n,) = _read_header(stream, IDX_LABEL_MAGIC, 1)
    payload = _read_exact(stream, n, "label data")
    return np.frombuffer(payload, dtype=np.uint8).astype(np.int64)


def _open(path: PathLike) -> BinaryIO:
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx_images(path: PathLike) -> np.ndarray:
    with _open(path) as fh:
        images = load_idx_images(fh)
    logger.debug("read %d images from %s", images.shape[0], path)
    return images


def read_idx_labels(path: PathLike) -> np.ndarray:
    with _open(path) as fh:
        return load_idx_labels(fh)


def load_idx_dataset(
    images_path: PathLike,
    labels_path: PathLike,
    num_classes: Optional[int] = None,
) -> Dataset:
    """
    Read a pair of IDX files into a Dataset.

    num_classes defaults to max(label) + 1 (10 for MNIST).
    """
    features = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if features.shape[0] != labels.shape[0]:
        raise BadParameter(
            f"{images_path} holds {features.shape[0]} images but "
            f"{labels_path} holds {labels.shape[0]} labels"
        )
    k = num_classes if num_classes is not None else int(labels.max()) + 1 if labels.size else 1
    logger.info("loaded %d samples (%d features, %d classes)", len(labels), features.shape[1], k)
    return Dataset(features, labels, k)


# =============================================================================
# Writers
# =============================================================================

def dump_idx_images(features: np.ndarray, rows: int, cols: int) -> bytes:
    """
    Encode an (n, rows*cols) matrix in [0, 1] as IDX image bytes.
    Values are rounded to the nearest 1/255 step.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if features.ndim != 2 or features.shape[1] != rows * cols:
        raise BadParameter(f"expected (n, {rows * cols}) features, got shape {features.shape}")
    pixels = np.clip(np.rint(features * PIXEL_SCALE), 0, 255).astype(np.uint8)
    return struct.pack(">4I", IDX_IMAGE_MAGIC, n, rows, cols) + pixels.tobytes()


def dump_idx_labels(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise BadParameter("IDX labels must fit in an unsigned byte")
    return struct.pack(">2I", IDX_LABEL_MAGIC, labels.shape[0]) + labels.astype(np.uint8).tobytes()


def write_idx_dataset(data: Dataset, images_path: PathLike, labels_path: PathLike, rows: int, cols: int) -> None:
    Path(images_path).write_bytes(dump_idx_images(data.features, rows, cols))
    Path(labels_path).write_bytes(dump_idx_labels(data.labels))
