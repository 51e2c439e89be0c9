from __future__ import annotations

"""
Latent-space inference engine for prediction confidence.

Preparation
-----------
1. Forward the training set through a trained network (deterministic mode).
2. Group the hidden-layer outputs by predicted label k and keep only points
   whose prediction matches the true label: the confidence sets
   {X(l,k)*}, one per hidden layer l and class k.
3. Fit a multivariate normal to every (l, k) set.
4. Score every set member under its own Gaussian and take the alpha-th and
   beta-th percentiles of those log-densities: q_alpha(l,k), q_beta(l,k).

Evaluation
----------
For an input x predicted as k, the log-density of each hidden output under
the (l, k) Gaussian is squashed into [0, 1] with a smoothstep pinned to 0 at
q_alpha and 1 at q_beta. The confidence is the product of the per-layer
values (layers treated as independent); a prediction is accepted when the
confidence is >= the acceptance threshold a.

Because only differences of log-densities enter the smoothstep, the
Gaussian normalisation constant cancels; it is kept in the reported
log-densities for readability.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.errors import (
    BadParameter,
    BadPercentiles,
    BadThresholds,
    DegenerateSampleCount,
    DimensionMismatch,
    EmptyClass,
    FingerprintMismatch,
)
from core.linalg import DEFAULT_RIDGE_SCALE, GaussianDensity, fit_gaussian, log_density, percentile
from core.models import Dataset
from engines.mlp_engine import EVAL_CHUNK, Network, forward
from engines.model_io import fingerprint

logger = logging.getLogger(__name__)

SmoothstepVariant = Literal["corrected", "literal"]
SMOOTHSTEP_VARIANTS = ("corrected", "literal")
_S_MIN = float(np.finfo(np.float64).tiny)
_S_MAX = float(np.nextafter(1.0, 0.0))


# =============================================================================
# Confidence sets
# =============================================================================

@dataclass
class ConfidenceSets:
    """
    Hidden-layer outputs of correctly classified training points.

    latents[l][k] is an (n_k, width_l) matrix for hidden layer l (0-based)
    and class k; every layer of one class holds the same n_k rows.
    """

    latents: List[List[np.ndarray]]
    counts: List[int]
    dropped: int = 0

    @property
    def num_layers(self) -> int:
        return len(self.latents)

    @property
    def num_classes(self) -> int:
        return len(self.counts)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "num_layers": self.num_layers,
            "num_classes": self.num_classes,
            "kept_per_class": list(self.counts),
            "misclassified_dropped": self.dropped,
        }


def collect_latents(net: Network, features: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    """Deterministic hidden outputs (one (n, width_l) array per layer) and predictions."""
    n = features.shape[0]
    if n == 0:
        empty = [np.zeros((0, spec.width)) for spec in net.hidden_layers]
        return empty, np.zeros(0, dtype=np.int64)

    per_layer: List[List[np.ndarray]] = [[] for _ in range(net.num_hidden)]
    preds: List[np.ndarray] = []
    for start in range(0, n, EVAL_CHUNK):
        trace = forward(net, features[start:start + EVAL_CHUNK])
        for l, h in enumerate(trace.hidden):
            per_layer[l].append(h)
        preds.append(np.argmax(trace.probs, axis=1))
    return [np.concatenate(chunks) for chunks in per_layer], np.concatenate(preds).astype(np.int64)


def build_confidence_sets(net: Network, train: Dataset) -> ConfidenceSets:
    """
    Raises
    ------
    DimensionMismatch : train does not match the network's label space.
    EmptyClass        : some class keeps no correctly classified point.
    """
    if train.num_classes != net.num_classes:
        raise DimensionMismatch(
            f"training data has {train.num_classes} classes, network outputs {net.num_classes}"
        )
    latents, preds = collect_latents(net, train.features)
    correct = preds == train.labels

    sets: List[List[np.ndarray]] = [[] for _ in range(net.num_hidden)]
    counts: List[int] = []
    for k in range(net.num_classes):
        keep = correct & (train.labels == k)
        counts.append(int(keep.sum()))
        for l in range(net.num_hidden):
            sets[l].append(latents[l][keep])

    empty = [k for k, c in enumerate(counts) if c == 0]
    if empty:
        raise EmptyClass(f"no correctly classified training points for classes {empty}", empty)

    dropped = int((~correct).sum())
    logger.info("confidence sets: %d points kept, %d misclassified dropped", sum(counts), dropped)
    return ConfidenceSets(latents=sets, counts=counts, dropped=dropped)


# =============================================================================
# UQ model
# =============================================================================

def check_percentiles(alpha: float, beta: float) -> None:
    if not (0.0 <= alpha <= beta <= 100.0):
        raise BadPercentiles(f"need 0 <= alpha <= beta <= 100, got alpha={alpha}, beta={beta}")


@dataclass(frozen=True)
class UqModel:
    """
    Fitted latent confidence model.

    densities[l][k], q_alpha[l, k], q_beta[l, k] for hidden layer l (0-based)
    and class k. `layers` optionally restricts scoring to a subset of hidden
    layers (1-based); None uses all of them.
    """

    alpha: float
    beta: float
    densities: List[List[GaussianDensity]]
    q_alpha: np.ndarray
    q_beta: np.ndarray
    network_fingerprint: str
    layers: Optional[Tuple[int, ...]] = None
    smoothstep: SmoothstepVariant = "corrected"

    @property
    def num_layers(self) -> int:
        return len(self.densities)

    @property
    def num_classes(self) -> int:
        return len(self.densities[0]) if self.densities else 0

    @property
    def active_layers(self) -> List[int]:
        """0-based indices of the layers entering the product."""
        if self.layers is None:
            return list(range(self.num_layers))
        return [l - 1 for l in self.layers]

    def with_options(
        self,
        layers: Optional[Sequence[int]] = None,
        smoothstep: Optional[SmoothstepVariant] = None,
    ) -> "UqModel":
        """Copy with a different layer selection and/or smoothstep variant."""
        sel = self.layers if layers is None else _check_layers(layers, self.num_layers)
        variant = smoothstep or self.smoothstep
        if variant not in SMOOTHSTEP_VARIANTS:
            raise BadParameter(f"unknown smoothstep variant {variant!r}")
        return replace(self, layers=sel, smoothstep=variant)

    def thresholds_frame(self) -> pd.DataFrame:
        """One row per (layer, class) cell."""
        rows = []
        for l in range(self.num_layers):
            for k in range(self.num_classes):
                g = self.densities[l][k]
                rows.append(
                    {
                        "layer": l + 1,
                        "class": k,
                        "dim": g.dim,
                        "log_det": g.log_det,
                        "reg_lambda": g.reg_lambda,
                        "q_alpha": float(self.q_alpha[l, k]),
                        "q_beta": float(self.q_beta[l, k]),
                    }
                )
        return pd.DataFrame(rows)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "num_layers": self.num_layers,
            "num_classes": self.num_classes,
            "layers": list(self.layers) if self.layers else None,
            "smoothstep": self.smoothstep,
            "network_fingerprint": self.network_fingerprint,
        }


def _check_layers(layers: Sequence[int], num_layers: int) -> Tuple[int, ...]:
    sel = tuple(sorted({int(l) for l in layers}))
    if not sel or sel[0] < 1 or sel[-1] > num_layers:
        raise BadParameter(f"layer selection {list(layers)} must be non-empty within 1..{num_layers}")
    return sel


def _self_log_probs(densities: List[List[GaussianDensity]], sets: ConfidenceSets) -> List[List[np.ndarray]]:
    return [
        [np.atleast_1d(log_density(densities[l][k], sets.latents[l][k])) for k in range(sets.num_classes)]
        for l in range(sets.num_layers)
    ]


def _thresholds(log_probs: List[List[np.ndarray]], alpha: float, beta: float) -> Tuple[np.ndarray, np.ndarray]:
    qa = np.array([[percentile(v, alpha) for v in row] for row in log_probs])
    qb = np.array([[percentile(v, beta) for v in row] for row in log_probs])
    return qa, qb


def fit_uq_model(
    sets: ConfidenceSets,
    alpha: float,
    beta: float,
    ridge_scale: float = DEFAULT_RIDGE_SCALE,
    network_fingerprint: str = "",
    workers: int = 1,
) -> UqModel:
    """
    Fit one Gaussian per (layer, class) cell and calibrate its thresholds.

    Cells are independent; with workers > 1 they are fitted on a thread pool.

    Raises
    ------
    BadPercentiles        : not 0 <= alpha <= beta <= 100.
    DegenerateSampleCount : a cell holds fewer than two points.
    """
    check_percentiles(alpha, beta)
    for k, count in enumerate(sets.counts):
        if count < 2:
            raise DegenerateSampleCount(f"class {k} keeps {count} point(s); at least 2 are needed")

    cells = [(l, k) for l in range(sets.num_layers) for k in range(sets.num_classes)]

    def _fit(cell: Tuple[int, int]) -> GaussianDensity:
        l, k = cell
        g = fit_gaussian(sets.latents[l][k], ridge_scale)
        logger.debug("layer %d class %d: d=%d n=%d ridge=%.3e", l + 1, k, g.dim, sets.counts[k], g.reg_lambda)
        return g

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fitted = list(pool.map(_fit, cells))
    else:
        fitted = [_fit(c) for c in cells]

    densities = [fitted[l * sets.num_classes:(l + 1) * sets.num_classes] for l in range(sets.num_layers)]
    qa, qb = _thresholds(_self_log_probs(densities, sets), alpha, beta)
    logger.info(
        "UQ model fitted: %d layers x %d classes, percentiles (%g, %g)",
        sets.num_layers, sets.num_classes, alpha, beta,
    )
    return UqModel(
        alpha=float(alpha),
        beta=float(beta),
        densities=densities,
        q_alpha=qa,
        q_beta=qb,
        network_fingerprint=network_fingerprint,
    )


def refit_thresholds(model: UqModel, sets: ConfidenceSets, alpha: float, beta: float) -> UqModel:
    """
    New percentile pair on an already fitted model: the Gaussians are reused
    and only q_alpha / q_beta are recomputed from the confidence sets.
    """
    check_percentiles(alpha, beta)
    qa, qb = _thresholds(_self_log_probs(model.densities, sets), alpha, beta)
    return replace(model, alpha=float(alpha), beta=float(beta), q_alpha=qa, q_beta=qb)


# =============================================================================
# Smoothstep
# =============================================================================

def smoothstep(
    log_prob: Union[float, np.ndarray],
    q_alpha: Union[float, np.ndarray],
    q_beta: Union[float, np.ndarray],
    variant: SmoothstepVariant = "corrected",
) -> Union[float, np.ndarray]:
    """
    Map a log-density to [0, 1]: 0 at or below q_alpha, 1 at or above q_beta,
    and in between, with X_q = (log_prob - q_alpha) / (q_beta - q_alpha),

        1/2 * (tanh((2 X_q - 1) / (2 sqrt(X_q (1 - X_q)))) + 1)

    The "literal" variant uses numerator (X_q - 1), which tends to 1/2 at
    the upper end; it is kept only for comparison runs. When
    q_alpha == q_beta the map is a step with value 1 at equality. Strictly
    between the thresholds the value never rounds to exactly 0 or 1.

    Raises
    ------
    BadThresholds : q_alpha > q_beta anywhere.
    """
    lp = np.asarray(log_prob, dtype=np.float64)
    qa = np.asarray(q_alpha, dtype=np.float64)
    qb = np.asarray(q_beta, dtype=np.float64)
    if np.any(qa > qb):
        raise BadThresholds("q_alpha must not exceed q_beta")
    if variant not in SMOOTHSTEP_VARIANTS:
        raise BadParameter(f"unknown smoothstep variant {variant!r}")

    width = qb - qa
    with np.errstate(divide="ignore", invalid="ignore"):
        xq = np.where(width > 0.0, (lp - qa) / np.where(width > 0.0, width, 1.0), 0.5)
        xq = np.clip(xq, 1e-300, 1.0 - 1e-16)
        numer = (2.0 * xq - 1.0) if variant == "corrected" else (xq - 1.0)
        mid = 0.5 * (np.tanh(numer / (2.0 * np.sqrt(xq * (1.0 - xq)))) + 1.0)
        # interior points stay strictly inside (0, 1) so the end shares match the percentiles
        mid = np.clip(mid, _S_MIN, _S_MAX)

    out = np.where(lp >= qb, 1.0, np.where(lp <= qa, 0.0, mid))
    return float(out) if out.ndim == 0 else out


# =============================================================================
# Scoring
# =============================================================================

@dataclass
class ConfidenceReport:
    """
    Confidence of one prediction.

    log_probs[l] and s[l] cover every hidden layer; `confidence` is the
    product of s over the model's active layers.
    """

    predicted_label: int
    log_probs: List[float]
    s: List[float]
    confidence: float
    accepted: Optional[bool] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "predicted_label": self.predicted_label,
            "log_probs": list(self.log_probs),
            "s": list(self.s),
            "confidence": self.confidence,
            "accepted": self.accepted,
        }


@dataclass
class BatchConfidence:
    """Stacked confidence results for n inputs (see ConfidenceReport)."""

    predicted: np.ndarray
    log_probs: np.ndarray
    s: np.ndarray
    confidence: np.ndarray

    def __len__(self) -> int:
        return int(self.predicted.shape[0])

    def report(self, i: int) -> ConfidenceReport:
        return ConfidenceReport(
            predicted_label=int(self.predicted[i]),
            log_probs=[float(v) for v in self.log_probs[i]],
            s=[float(v) for v in self.s[i]],
            confidence=float(self.confidence[i]),
        )


def verify_fingerprint(model: UqModel, net: Network) -> None:
    if model.network_fingerprint and model.network_fingerprint != fingerprint(net):
        raise FingerprintMismatch("UQ model was fitted on a different network")


def _check_grid(model: UqModel, net: Network) -> None:
    if model.num_layers != net.num_hidden or model.num_classes != net.num_classes:
        raise DimensionMismatch(
            f"UQ model grid {model.num_layers}x{model.num_classes} does not match "
            f"network ({net.num_hidden} hidden layers, {net.num_classes} classes)"
        )


def score_latents(model: UqModel, latents: List[np.ndarray], predicted: np.ndarray) -> BatchConfidence:
    """Score precomputed hidden outputs (one (n, width_l) array per layer)."""
    n = predicted.shape[0]
    lp = np.zeros((n, model.num_layers))
    for l in range(model.num_layers):
        for k in np.unique(predicted):
            rows = predicted == k
            lp[rows, l] = log_density(model.densities[l][int(k)], latents[l][rows])

    qa = model.q_alpha.T[predicted]
    qb = model.q_beta.T[predicted]
    s = np.asarray(smoothstep(lp, qa, qb, model.smoothstep)).reshape(n, model.num_layers)
    confidence = np.prod(s[:, model.active_layers], axis=1)
    return BatchConfidence(predicted=predicted, log_probs=lp, s=s, confidence=confidence)


def score_batch(model: UqModel, net: Network, x: np.ndarray, verify: bool = True) -> BatchConfidence:
    """
    Score every row of x (n, D).

    Raises
    ------
    FingerprintMismatch : model was fitted on another network.
    DimensionMismatch   : x or the model grid does not fit the network.
    """
    if verify:
        verify_fingerprint(model, net)
    _check_grid(model, net)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != net.input_dim:
        raise DimensionMismatch(f"network expects {net.input_dim} features, got {x.shape[1]}")
    latents, predicted = collect_latents(net, x)
    return score_latents(model, latents, predicted)


def score(model: UqModel, net: Network, x: np.ndarray) -> ConfidenceReport:
    """Confidence report for one input vector; `accepted` is left unset."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch(f"score takes one vector, got shape {x.shape}")
    return score_batch(model, net, x[None, :]).report(0)


def accept(report: ConfidenceReport, threshold: float) -> bool:
    """Accept iff confidence >= threshold; records the decision on the report."""
    if not 0.0 <= threshold <= 1.0:
        raise BadParameter(f"acceptance threshold must lie in [0, 1], got {threshold}")
    report.accepted = bool(report.confidence >= threshold)
    return report.accepted
