from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Any, Dict, List, Literal, Mapping

import numpy as np

from core.errors import BadArchitecture, BadParameter, DimensionMismatch


def _frozen_array(values: Any, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# =============================================================================
# Dataset – feature matrix + integer labels
# =============================================================================

@dataclass(frozen=True)
class Dataset:
    """
    Labelled feature matrix {X_i, y_i}.

    Attributes
    ----------
    features    : (n, D) float64 array, entries in [0, 1].
    labels      : (n,) int64 array, values in 0..num_classes-1.
    num_classes : K.

    Arrays are copied and made read-only on construction.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        feats = _frozen_array(self.features, np.float64)
        if feats.ndim == 1 and feats.size == 0:
            feats = _frozen_array(np.zeros((0, 0)), np.float64)
        labels = _frozen_array(self.labels, np.int64).ravel()
        labels.setflags(write=False)

        if feats.ndim != 2:
            raise DimensionMismatch(f"features must be 2-D, got shape {feats.shape}")
        if feats.shape[0] != labels.shape[0]:
            raise DimensionMismatch(
                f"{feats.shape[0]} feature rows but {labels.shape[0]} labels"
            )
        if self.num_classes < 1:
            raise BadParameter(f"num_classes must be >= 1, got {self.num_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise BadParameter(
                f"labels must lie in 0..{self.num_classes - 1}, "
                f"found range {labels.min()}..{labels.max()}"
            )
        if feats.size and (not np.all(np.isfinite(feats)) or feats.min() < 0.0 or feats.max() > 1.0):
            raise BadParameter("features must be finite and lie in [0, 1]")

        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "num_classes", int(self.num_classes))

    # ----- Basic aggregates -----

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.features.shape[1])

    def class_counts(self) -> Dict[int, int]:
        counts = np.bincount(self.labels, minlength=self.num_classes)
        return {k: int(c) for k, c in enumerate(counts)}

    def subset(self, mask: np.ndarray) -> "Dataset":
        """Rows selected by a boolean mask or index array."""
        return Dataset(self.features[mask], self.labels[mask], self.num_classes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "samples": len(self),
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "class_counts": self.class_counts(),
        }


# =============================================================================
# OodSplit – leave-one-label-out partition
# =============================================================================

@dataclass(frozen=True)
class OodSplit:
    """
    Train / in-distribution test / OOD test sets for one held-out label.

    train and test_in use remapped labels 0..K-2; test_ood keeps the
    original held-out label with num_classes = K.
    """

    train: Dataset
    test_in: Dataset
    test_ood: Dataset
    held_out_label: int
    label_map: Mapping[int, int]

    @property
    def inverse_label_map(self) -> Dict[int, int]:
        return {v: k for k, v in self.label_map.items()}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "held_out_label": self.held_out_label,
            "label_map": {str(k): v for k, v in self.label_map.items()},
            "train_samples": len(self.train),
            "test_in_samples": len(self.test_in),
            "test_ood_samples": len(self.test_ood),
        }


# =============================================================================
# LayerSpec – one hidden layer of the classifier
# =============================================================================

Activation = Literal["relu", "identity"]
ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class LayerSpec:
    """
    width        : node count.
    activation   : "relu" or "identity".
    dropout_rate : probability a unit is dropped in stochastic mode, in [0, 1).
    """

    width: int
    activation: Activation = "relu"
    dropout_rate: float = 0.0

    def __post_init__(self) -> None:
        if int(self.width) < 1:
            raise BadArchitecture(f"layer width must be >= 1, got {self.width}")
        if self.activation not in ACTIVATIONS:
            raise BadArchitecture(f"unknown activation {self.activation!r}")
        if not 0.0 <= float(self.dropout_rate) < 1.0:
            raise BadArchitecture(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    @classmethod
    def hidden_stack(cls, widths: List[int], dropout_rate: float = 0.0) -> List["LayerSpec"]:
        """[LayerSpec(w, "relu", dropout_rate) for w in widths]"""
        return [cls(int(w), "relu", float(dropout_rate)) for w in widths]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# =============================================================================
# RuleResult – output of the audit rules
# =============================================================================

RuleLevel = Literal["ERROR", "WARNING", "INFO"]


@dataclass
class RuleResult:
    """
    Result of applying one audit rule.

    Attributes
    ----------
    level   : "ERROR" / "WARNING" / "INFO".
    message : human-readable explanation.
    scope   : what was audited (calibration, metrics, reference, ...).
    code    : short rule code (e.g., CAL-001).
    context : label, method, layer, class, measured values, ...
    """

    level: RuleLevel
    message: str
    scope: str = "general"
    code: str = ""
    context: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
