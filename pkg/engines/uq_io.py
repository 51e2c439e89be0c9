from __future__ import annotations

"""
Binary UQ-model files.

Layout (little-endian):

    "LUQ1"                       4 bytes magic
    version                      u32 (currently 1)
    alpha, beta                  f64, f64
    smoothstep variant           u8  (0 = corrected, 1 = literal)
    selected layer count         u32, then that many u32 (1-based; 0 = all)
    grid                         u32 hidden layers, u32 classes
    per (layer, class), layer-major:
        d                        u32
        mean                     f64 * d
        lower factor             f64 * d(d+1)/2, packed row-major lower triangle
        log_det, reg_lambda      f64, f64
        q_alpha, q_beta          f64, f64
    fingerprint                  u32 length + bytes (hex SHA-256 of the model file)
    crc32 of everything above    u32
"""

import io
import struct
from pathlib import Path
from typing import BinaryIO, List, Union

import numpy as np

from core.errors import BadFormat
from core.linalg import GaussianDensity
from engines.latent_engine import SMOOTHSTEP_VARIANTS, UqModel
from engines.model_io import _Reader, check_envelope, seal

UQ_MAGIC = b"LUQ1"
UQ_VERSION = 1

Sink = Union[str, Path, BinaryIO]


def dump_uq_model(model: UqModel) -> bytes:
    out = io.BytesIO()
    out.write(UQ_MAGIC)
    out.write(struct.pack("<Idd", UQ_VERSION, model.alpha, model.beta))
    out.write(struct.pack("<B", SMOOTHSTEP_VARIANTS.index(model.smoothstep)))
    layers = list(model.layers or [])
    out.write(struct.pack(f"<I{len(layers)}I", len(layers), *layers))
    out.write(struct.pack("<II", model.num_layers, model.num_classes))

    for l in range(model.num_layers):
        for k in range(model.num_classes):
            g = model.densities[l][k]
            d = g.dim
            out.write(struct.pack("<I", d))
            out.write(np.ascontiguousarray(g.mean, dtype="<f8").tobytes())
            out.write(np.ascontiguousarray(g.chol_lower[np.tril_indices(d)], dtype="<f8").tobytes())
            out.write(struct.pack("<4d", g.log_det, g.reg_lambda, model.q_alpha[l, k], model.q_beta[l, k]))

    fp = model.network_fingerprint.encode("ascii")
    out.write(struct.pack("<I", len(fp)) + fp)
    return seal(out.getvalue())


def parse_uq_model(buf: bytes) -> UqModel:
    """
    Raises
    ------
    BadFormat       : wrong magic, checksum or truncated body.
    VersionMismatch : unsupported version field.
    """
    body = check_envelope(buf, UQ_MAGIC, UQ_VERSION, "UQ model")
    r = _Reader(body)
    r.take(len(UQ_MAGIC))
    _, alpha, beta = r.unpack("<Idd")
    (variant_code,) = r.unpack("<B")
    if variant_code >= len(SMOOTHSTEP_VARIANTS):
        raise BadFormat(f"unknown smoothstep code {variant_code}")
    (n_sel,) = r.unpack("<I")
    selected = r.unpack(f"<{n_sel}I") if n_sel else ()
    num_layers, num_classes = r.unpack("<II")

    densities: List[List[GaussianDensity]] = []
    qa = np.zeros((num_layers, num_classes))
    qb = np.zeros((num_layers, num_classes))
    for l in range(num_layers):
        row: List[GaussianDensity] = []
        for k in range(num_classes):
            (d,) = r.unpack("<I")
            mean = r.floats(d)
            chol = np.zeros((d, d))
            chol[np.tril_indices(d)] = r.floats(d * (d + 1) // 2)
            log_det, reg, qa[l, k], qb[l, k] = r.unpack("<4d")
            row.append(GaussianDensity(mean=mean, chol_lower=chol, log_det=log_det, reg_lambda=reg))
        densities.append(row)

    (fp_len,) = r.unpack("<I")
    fp = r.take(fp_len).decode("ascii")
    if r.pos != len(body):
        raise BadFormat("trailing bytes after the fingerprint")

    return UqModel(
        alpha=alpha,
        beta=beta,
        densities=densities,
        q_alpha=qa,
        q_beta=qb,
        network_fingerprint=fp,
        layers=tuple(selected) or None,
        smoothstep=SMOOTHSTEP_VARIANTS[variant_code],
    )


def save_uq_model(model: UqModel, sink: Sink) -> None:
    data = dump_uq_model(model)
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(data)
    else:
        sink.write(data)


def load_uq_model(source: Sink) -> UqModel:
    if isinstance(source, (str, Path)):
        return parse_uq_model(Path(source).read_bytes())
    return parse_uq_model(source.read())
