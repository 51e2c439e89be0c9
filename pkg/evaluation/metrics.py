from __future__ import annotations

"""
Acceptance metrics on scored test sets.

Every labelled input falls in exactly one group:

- well-classified : in-distribution, predicted == true label
- misclassified   : in-distribution, predicted != true label
- ood             : sample of the held-out label

In-distribution rows scored without ground truth (UNKNOWN_LABEL) belong to
neither of the first two groups and are only counted.

For an acceptance threshold a (accept when confidence >= a):

    TP     = accepted well-classified / well-classified
    TN     = rejected misclassified   / misclassified
    TN-OOD = rejected ood             / ood

A rate whose group is empty is reported as None ("absent"), never 0.
"""

import logging
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from core.errors import BadFormat, BadParameter, EmptyInput

logger = logging.getLogger(__name__)

IN_DISTRIBUTION = "in_distribution"
OOD = "ood"
GROUPS = (IN_DISTRIBUTION, OOD)
SCORE_COLUMNS = ["true_label", "predicted_label", "confidence", "group"]

# true_label value for rows scored without ground truth.
UNKNOWN_LABEL = -1


# =============================================================================
# ScoredSet
# =============================================================================

@dataclass(frozen=True)
class ScoredSet:
    """
    Per-sample scoring results.

    true_label      : (n,) int64; UNKNOWN_LABEL when no ground truth exists.
    predicted_label : (n,) int64.
    confidence      : (n,) float64 in [0, 1].
    is_ood          : (n,) bool, True for the held-out-label group.
    """

    true_label: np.ndarray
    predicted_label: np.ndarray
    confidence: np.ndarray
    is_ood: np.ndarray

    def __post_init__(self) -> None:
        true = np.asarray(self.true_label, dtype=np.int64).ravel()
        pred = np.asarray(self.predicted_label, dtype=np.int64).ravel()
        conf = np.asarray(self.confidence, dtype=np.float64).ravel()
        ood = np.asarray(self.is_ood, dtype=bool).ravel()
        if not (true.shape == pred.shape == conf.shape == ood.shape):
            raise BadParameter(
                f"scored columns differ in length: {true.shape[0]}, {pred.shape[0]}, "
                f"{conf.shape[0]}, {ood.shape[0]}"
            )
        if conf.size and (not np.all(np.isfinite(conf)) or conf.min() < 0.0 or conf.max() > 1.0):
            raise BadParameter("confidences must be finite and lie in [0, 1]")
        object.__setattr__(self, "true_label", true)
        object.__setattr__(self, "predicted_label", pred)
        object.__setattr__(self, "confidence", conf)
        object.__setattr__(self, "is_ood", ood)

    def __len__(self) -> int:
        return int(self.confidence.shape[0])

    # ----- Groups -----

    @property
    def labeled(self) -> np.ndarray:
        """In-distribution rows with a known true label."""
        return ~self.is_ood & (self.true_label != UNKNOWN_LABEL)

    @property
    def unlabeled(self) -> np.ndarray:
        return ~self.is_ood & (self.true_label == UNKNOWN_LABEL)

    @property
    def well_classified(self) -> np.ndarray:
        return self.labeled & (self.predicted_label == self.true_label)

    @property
    def misclassified(self) -> np.ndarray:
        return self.labeled & (self.predicted_label != self.true_label)

    def group_masks(self) -> Dict[str, np.ndarray]:
        return {
            "well_classified": self.well_classified,
            "misclassified": self.misclassified,
            "ood": self.is_ood,
        }

    # ----- Construction -----

    @classmethod
    def from_parts(
        cls,
        true_label: np.ndarray,
        predicted_label: np.ndarray,
        confidence: np.ndarray,
        ood: bool,
    ) -> "ScoredSet":
        """One group's rows (all in-distribution or all OOD)."""
        n = np.asarray(confidence).shape[0]
        return cls(true_label, predicted_label, confidence, np.full(n, bool(ood)))

    @classmethod
    def concat(cls, parts: Iterable["ScoredSet"]) -> "ScoredSet":
        parts = list(parts)
        if not parts:
            return cls(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0, dtype=bool))
        return cls(
            np.concatenate([p.true_label for p in parts]),
            np.concatenate([p.predicted_label for p in parts]),
            np.concatenate([p.confidence for p in parts]),
            np.concatenate([p.is_ood for p in parts]),
        )

    # ----- Tables -----

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "true_label": self.true_label,
                "predicted_label": self.predicted_label,
                "confidence": self.confidence,
                "group": np.where(self.is_ood, OOD, IN_DISTRIBUTION),
            }
        )

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "ScoredSet":
        """
        Raises
        ------
        BadFormat : missing columns or unknown group tags.
        """
        missing = [c for c in SCORE_COLUMNS if c not in df.columns]
        if missing:
            raise BadFormat(f"scored table lacks columns {missing}")
        groups = df["group"].astype(str)
        unknown = sorted(set(groups) - set(GROUPS))
        if unknown:
            raise BadFormat(f"unknown group tags {unknown}; expected {list(GROUPS)}")
        return cls(
            df["true_label"].to_numpy(),
            df["predicted_label"].to_numpy(),
            df["confidence"].to_numpy(),
            (groups == OOD).to_numpy(),
        )


def write_scores(scored: ScoredSet, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scored.to_frame().to_csv(path, index=False, float_format="%.17g")
    return path


def read_scores(path: Union[str, Path]) -> ScoredSet:
    """
    Raises
    ------
    BadFormat : the file is empty, is not CSV, or lacks the score columns.
    """
    try:
        # bit-exact reload of the %.17g confidences
        df = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise BadFormat(f"{path}: not a scores table ({exc})") from exc
    try:
        return ScoredSet.from_frame(df)
    except BadFormat as exc:
        raise BadFormat(f"{path}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise BadFormat(f"{path}: unreadable score columns ({exc})") from exc


# =============================================================================
# Metrics
# =============================================================================

@dataclass
class Metrics:
    """
    Rates (None when the group is empty) and the counts behind them.
    """

    threshold: float
    tp_rate: Optional[float]
    tn_rate: Optional[float]
    tn_ood_rate: Optional[float]
    well_classified: int
    misclassified: int
    ood: int
    accepted_well_classified: int
    rejected_misclassified: int
    rejected_ood: int
    unlabeled: int = 0

    def rate(self, name: str) -> Optional[float]:
        """'tp' | 'tn' | 'tn_ood'."""
        return {"tp": self.tp_rate, "tn": self.tn_rate, "tn_ood": self.tn_ood_rate}[name]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _check_threshold(threshold: float) -> float:
    threshold = float(threshold)
    if not 0.0 <= threshold <= 1.0:
        raise BadParameter(f"acceptance threshold must lie in [0, 1], got {threshold}")
    return threshold


def _ratio(hits: int, total: int) -> Optional[float]:
    return hits / total if total else None


def evaluate(scored: ScoredSet, threshold: float) -> Metrics:
    """
    TP / TN / TN-OOD at acceptance threshold a.

    Raises
    ------
    EmptyInput   : scored has no rows.
    BadParameter : a outside [0, 1].
    """
    if len(scored) == 0:
        raise EmptyInput("cannot evaluate an empty scored set")
    a = _check_threshold(threshold)
    accepted = scored.confidence >= a
    masks = scored.group_masks()

    n_well = int(masks["well_classified"].sum())
    n_mis = int(masks["misclassified"].sum())
    n_ood = int(masks["ood"].sum())
    acc_well = int((accepted & masks["well_classified"]).sum())
    rej_mis = int((~accepted & masks["misclassified"]).sum())
    rej_ood = int((~accepted & masks["ood"]).sum())
    n_unlabeled = int(scored.unlabeled.sum())

    for name, count in (("well-classified", n_well), ("misclassified", n_mis), ("ood", n_ood)):
        if count == 0:
            logger.warning("%s group is empty; its rate is reported as absent", name)
    if n_unlabeled:
        logger.warning("%d in-distribution rows carry no true label and are left out of TP and TN", n_unlabeled)

    return Metrics(
        threshold=a,
        tp_rate=_ratio(acc_well, n_well),
        tn_rate=_ratio(rej_mis, n_mis),
        tn_ood_rate=_ratio(rej_ood, n_ood),
        well_classified=n_well,
        misclassified=n_mis,
        ood=n_ood,
        accepted_well_classified=acc_well,
        rejected_misclassified=rej_mis,
        rejected_ood=rej_ood,
        unlabeled=n_unlabeled,
    )


def sweep_thresholds(points: int = 101) -> np.ndarray:
    if points < 2:
        raise BadParameter(f"a sweep needs at least 2 points, got {points}")
    return np.linspace(0.0, 1.0, points)


def threshold_sweep(scored: ScoredSet, thresholds: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """
    One row per threshold: threshold, tp, tn, tn_ood (NaN for absent rates).
    Defaults to 101 evenly spaced thresholds on [0, 1].
    """
    if len(scored) == 0:
        raise EmptyInput("cannot sweep an empty scored set")
    values = sweep_thresholds() if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    conf = scored.confidence
    masks = scored.group_masks()

    # accepted[i, j] = conf[j] >= a_i
    accepted = conf[None, :] >= values[:, None]

    def _rates(mask: np.ndarray, want_accepted: bool) -> np.ndarray:
        total = int(mask.sum())
        if total == 0:
            return np.full(values.shape[0], np.nan)
        hits = accepted[:, mask] if want_accepted else ~accepted[:, mask]
        return hits.sum(axis=1) / total

    for a in values:
        _check_threshold(a)
    return pd.DataFrame(
        {
            "threshold": values,
            "tp": _rates(masks["well_classified"], True),
            "tn": _rates(masks["misclassified"], False),
            "tn_ood": _rates(masks["ood"], False),
        }
    )


def metrics_frame(metrics: Metrics) -> pd.DataFrame:
    """Single-row table of a Metrics (absent rates as NaN)."""
    row = metrics.to_dict()
    for key in ("tp_rate", "tn_rate", "tn_ood_rate"):
        if row[key] is None:
            row[key] = np.nan
    return pd.DataFrame([row])
