from __future__ import annotations

"""
MC-dropout baseline and the shared vote aggregation.

T stochastic forward passes are run with dropout active at the training
rates; the prediction is the modal label and the confidence is the fraction
of passes that voted for it. Pass t draws its masks from the t-th child of
the caller's seed, so results do not depend on evaluation order.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Sequence

import numpy as np

from core.errors import BadParameter, DimensionMismatch
from engines.mlp_engine import EVAL_CHUNK, Network, forward

logger = logging.getLogger(__name__)


# =============================================================================
# Votes
# =============================================================================

@dataclass
class VoteResult:
    """
    predicted_label : modal vote (ties go to the lowest label).
    confidence      : votes for the mode / total votes.
    histogram       : votes per label, length K.
    """

    predicted_label: int
    confidence: float
    histogram: np.ndarray

    @property
    def total_votes(self) -> int:
        return int(self.histogram.sum())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "predicted_label": self.predicted_label,
            "confidence": self.confidence,
            "histogram": [int(v) for v in self.histogram],
        }


def vote_counts(votes: np.ndarray, num_classes: int) -> np.ndarray:
    """
    votes : (T, n) predicted labels, one row per pass or member.
    Returns (n, K) counts.
    """
    votes = np.asarray(votes, dtype=np.int64)
    n = votes.shape[1]
    counts = np.zeros((n, num_classes), dtype=np.int64)
    for row in votes:
        counts[np.arange(n), row] += 1
    return counts


def votes_to_results(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(n, K) counts -> modal labels (lowest on ties) and modal fractions."""
    predicted = np.argmax(counts, axis=1)
    confidence = counts[np.arange(counts.shape[0]), predicted] / counts.sum(axis=1)
    return predicted.astype(np.int64), confidence


def vote_result(counts: np.ndarray) -> VoteResult:
    """VoteResult for a single (K,) count vector."""
    predicted, confidence = votes_to_results(np.atleast_2d(counts))
    return VoteResult(int(predicted[0]), float(confidence[0]), np.asarray(counts, dtype=np.int64).ravel())


# =============================================================================
# MC-dropout
# =============================================================================

def _pass_seeds(seed: int, passes: int) -> Sequence[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(passes)


def mc_dropout_counts(net: Network, x: np.ndarray, passes: int, seed: int) -> np.ndarray:
    """(n, K) vote counts over `passes` dropout passes for a batch x (n, D)."""
    if passes < 1:
        raise BadParameter(f"passes must be >= 1, got {passes}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != net.input_dim:
        raise DimensionMismatch(f"network expects {net.input_dim} features, got {x.shape[1]}")
    if not net.has_dropout:
        logger.warning("MC-dropout on a network without dropout: every pass is identical")

    n = x.shape[0]
    counts = np.zeros((n, net.num_classes), dtype=np.int64)
    for child in _pass_seeds(seed, passes):
        rng = np.random.default_rng(child)
        for start in range(0, n, EVAL_CHUNK):
            trace = forward(net, x[start:start + EVAL_CHUNK], mode="dropout", seed=rng)
            pred = np.argmax(trace.probs, axis=1)
            counts[start + np.arange(pred.shape[0]), pred] += 1
    return counts


def mc_dropout_score(net: Network, x: np.ndarray, passes: int, seed: int) -> VoteResult:
    """
    Vote of `passes` dropout passes on one input vector.

    Raises
    ------
    DimensionMismatch : x does not match the network input.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch(f"mc_dropout_score takes one vector, got shape {x.shape}")
    return vote_result(mc_dropout_counts(net, x[None, :], passes, seed)[0])


def mc_dropout_batch(net: Network, x: np.ndarray, passes: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Modal labels and vote fractions for every row of x."""
    return votes_to_results(mc_dropout_counts(net, x, passes, seed))
