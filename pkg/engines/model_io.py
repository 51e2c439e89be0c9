from __future__ import annotations

"""
Binary model files.

Layout (little-endian):

    "LCN1"                       4 bytes magic
    version                      u32 (currently 1)
    input_dim                    u32
    layer count                  u32 (hidden layers + output layer)
    seed                         i64
    per layer:
        width                    u32
        activation               u8  (0 = relu, 1 = identity)
        dropout rate             f64
        weights                  f64 * width * fan_in, row-major
        biases                   f64 * width
    crc32 of everything above    u32

The network fingerprint used by UQ models is the SHA-256 of these bytes.
"""

import hashlib
import io
import struct
import zlib
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from core.errors import BadFormat, VersionMismatch
from core.models import LayerSpec
from engines.mlp_engine import Network

MODEL_MAGIC = b"LCN1"
MODEL_VERSION = 1

_ACTIVATION_CODES = {"relu": 0, "identity": 1}
_ACTIVATION_NAMES = {v: k for k, v in _ACTIVATION_CODES.items()}

Sink = Union[str, Path, BinaryIO]


class _Reader:
    """Bounds-checked cursor over a byte buffer."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.buf):
            raise BadFormat("model data ends unexpectedly")
        out = self.buf[self.pos:self.pos + size]
        self.pos += size
        return out

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def check_envelope(buf: bytes, magic: bytes, version: int, what: str) -> bytes:
    """
    Validate magic, version and trailing CRC32; return the body without the
    checksum. Shared by every binary artifact in this repo.
    """
    if len(buf) < len(magic) + 8 or buf[:len(magic)] != magic:
        raise BadFormat(f"not a {what} file (bad magic)")
    (found,) = struct.unpack_from("<I", buf, len(magic))
    if found != version:
        raise VersionMismatch(f"{what} version {found} is not supported (expected {version})")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise BadFormat(f"{what} checksum mismatch")
    return body


def seal(body: bytes) -> bytes:
    """Append the CRC32 trailer."""
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


# =============================================================================
# Encode / decode
# =============================================================================

def dump_network(net: Network) -> bytes:
    out = io.BytesIO()
    out.write(MODEL_MAGIC)
    out.write(struct.pack("<IIIq", MODEL_VERSION, net.input_dim, net.num_layers, net.seed))
    for spec, w, b in zip(net.layers, net.weights, net.biases):
        out.write(struct.pack("<IBd", spec.width, _ACTIVATION_CODES[spec.activation], spec.dropout_rate))
        out.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        out.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return seal(out.getvalue())


def parse_network(buf: bytes) -> Network:
    """
    Raises
    ------
    BadFormat       : wrong magic, checksum or truncated body.
    VersionMismatch : unsupported version field.
    """
    body = check_envelope(buf, MODEL_MAGIC, MODEL_VERSION, "model")
    r = _Reader(body)
    r.take(len(MODEL_MAGIC))
    _, input_dim, count, seed = r.unpack("<IIIq")

    layers, weights, biases = [], [], []
    fan_in = input_dim
    for _ in range(count):
        width, act, rate = r.unpack("<IBd")
        if act not in _ACTIVATION_NAMES:
            raise BadFormat(f"unknown activation code {act}")
        layers.append(LayerSpec(width, _ACTIVATION_NAMES[act], rate))
        weights.append(r.floats(width * fan_in).reshape(width, fan_in))
        biases.append(r.floats(width))
        fan_in = width
    if r.pos != len(body):
        raise BadFormat("trailing bytes after the last layer")
    if count < 2:
        raise BadFormat("model has no hidden layer")
    return Network(input_dim, layers, weights, biases, seed)


def save_network(net: Network, sink: Sink) -> None:
    data = dump_network(net)
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(data)
    else:
        sink.write(data)


def load_network(source: Sink) -> Network:
    if isinstance(source, (str, Path)):
        return parse_network(Path(source).read_bytes())
    return parse_network(source.read())


def fingerprint(net: Network) -> str:
    """SHA-256 hex digest of the serialized model."""
    return hashlib.sha256(dump_network(net)).hexdigest()
