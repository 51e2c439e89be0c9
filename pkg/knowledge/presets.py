from __future__ import annotations

"""
Experiment presets.

- PERCENTILE_CONFIGS : named (alpha, beta) pairs q1..q6.
- ARCHITECTURES      : hidden-layer widths and the dropout rates tried.
- DEFAULT_THRESHOLDS : acceptance threshold a per method.
- REFERENCE_RESULTS  : reference TP / TN / TN-OOD (mean, std) per cell,
                       used by rules.rules_reference.
- ACCEPTANCE_TARGETS : desk-scale tolerance bands for MNIST reproduction.
"""

from dataclasses import dataclass, asdict
from typing import Dict, List, Optional, Sequence, Tuple, Union

from core.errors import BadPercentiles


# =============================================================================
# Percentile pairs
# =============================================================================

PERCENTILE_CONFIGS: Dict[str, Tuple[float, float]] = {
    # 2 x [1024]
    "q1": (0.01, 1.0),
    "q2": (0.1, 50.0),
    "q3": (3.0, 90.0),
    # 4 x [256]
    "q4": (2.0, 10.0),
    "q5": (3.0, 50.0),
    "q6": (7.0, 90.0),
}


def resolve_percentiles(spec: Union[str, Sequence[float]]) -> Tuple[float, float]:
    """
    "q3" -> (3.0, 90.0); (3, 90) -> (3.0, 90.0).

    Raises
    ------
    BadPercentiles : unknown name, wrong arity or alpha > beta.
    """
    if isinstance(spec, str):
        key = spec.strip().lower()
        if key not in PERCENTILE_CONFIGS:
            raise BadPercentiles(f"unknown percentile preset {spec!r}")
        return PERCENTILE_CONFIGS[key]
    pair = tuple(float(v) for v in spec)
    if len(pair) != 2:
        raise BadPercentiles(f"a percentile pair has two entries, got {len(pair)}")
    alpha, beta = pair
    if not 0.0 <= alpha <= beta <= 100.0:
        raise BadPercentiles(f"need 0 <= alpha <= beta <= 100, got ({alpha}, {beta})")
    return alpha, beta


def preset_name(alpha: float, beta: float) -> Optional[str]:
    for name, pair in PERCENTILE_CONFIGS.items():
        if pair == (float(alpha), float(beta)):
            return name
    return None


# =============================================================================
# Architectures
# =============================================================================

@dataclass(frozen=True)
class ArchitecturePreset:
    name: str
    widths: Tuple[int, ...]
    dropout_rates: Tuple[float, ...]
    percentile_presets: Tuple[str, ...]

    def to_dict(self):
        return asdict(self)


ARCHITECTURES: Dict[str, ArchitecturePreset] = {
    "2x1024": ArchitecturePreset("2x1024", (1024, 1024), (0.2, 0.5), ("q1", "q2", "q3")),
    "4x256": ArchitecturePreset("4x256", (256, 256, 256, 256), (0.1, 0.25), ("q4", "q5", "q6")),
}


def architecture_label(widths: Sequence[int]) -> str:
    """[1024, 1024] -> '2x1024'; mixed widths -> '512-256'."""
    widths = [int(w) for w in widths]
    if len(set(widths)) == 1:
        return f"{len(widths)}x{widths[0]}"
    return "-".join(str(w) for w in widths)


# =============================================================================
# Protocol constants
# =============================================================================

DEFAULT_THRESHOLDS: Dict[str, float] = {
    "inference": 0.5,
    "mc_dropout": 0.99,
    "ensemble": 0.99,
}

EARLY_STOP_ACCURACY = 0.96
MC_DROPOUT_PASSES = 100
ENSEMBLE_MEMBERS = 10


# =============================================================================
# Reference results (mean, std) per (method, architecture, dropout)
# =============================================================================

@dataclass(frozen=True)
class ReferenceCell:
    method: str
    architecture: str
    dropout: float
    percentiles: Optional[str]
    tp: Tuple[float, float]
    tn: Tuple[float, float]
    tn_ood: Tuple[float, float]


def _cell(method, arch, dropout, q, tp, tn, tn_ood) -> ReferenceCell:
    return ReferenceCell(method, arch, dropout, q, tp, tn, tn_ood)


REFERENCE_RESULTS: List[ReferenceCell] = [
    _cell("inference", "2x1024", 0.2, "q1", (0.929, 0.002), (0.732, 0.05), (0.761, 0.158)),
    _cell("inference", "2x1024", 0.5, "q1", (0.933, 0.003), (0.733, 0.046), (0.756, 0.161)),
    _cell("inference", "4x256", 0.1, "q4", (0.928, 0.003), (0.723, 0.021), (0.707, 0.144)),
    _cell("inference", "4x256", 0.25, "q4", (0.928, 0.003), (0.745, 0.017), (0.732, 0.138)),
    _cell("inference", "2x1024", 0.2, "q2", (0.873, 0.002), (0.855, 0.031), (0.877, 0.1)),
    _cell("inference", "2x1024", 0.5, "q2", (0.877, 0.004), (0.866, 0.04), (0.879, 0.098)),
    _cell("inference", "4x256", 0.1, "q5", (0.87, 0.006), (0.858, 0.021), (0.849, 0.113)),
    _cell("inference", "4x256", 0.25, "q5", (0.869, 0.004), (0.873, 0.017), (0.869, 0.103)),
    _cell("inference", "2x1024", 0.2, "q3", (0.751, 0.005), (0.957, 0.014), (0.97, 0.035)),
    _cell("inference", "2x1024", 0.5, "q3", (0.753, 0.006), (0.968, 0.014), (0.973, 0.031)),
    _cell("inference", "4x256", 0.1, "q6", (0.748, 0.081), (0.957, 0.013), (0.951, 0.058)),
    _cell("inference", "4x256", 0.25, "q6", (0.747, 0.007), (0.967, 0.012), (0.955, 0.052)),
    _cell("mc_dropout", "2x1024", 0.2, None, (0.98, 0.002), (0.396, 0.038), (0.267, 0.079)),
    _cell("mc_dropout", "2x1024", 0.5, None, (0.902, 0.013), (0.819, 0.038), (0.674, 0.125)),
    _cell("mc_dropout", "4x256", 0.1, None, (0.96, 0.004), (0.564, 0.034), (0.409, 0.111)),
    _cell("mc_dropout", "4x256", 0.25, None, (0.908, 0.006), (0.742, 0.024), (0.591, 0.141)),
    _cell("ensemble", "2x1024", 0.2, None, (0.952, 0.009), (0.684, 0.042), (0.517, 0.119)),
    _cell("ensemble", "2x1024", 0.5, None, (0.969, 0.004), (0.594, 0.022), (0.431, 0.119)),
    _cell("ensemble", "4x256", 0.1, None, (0.956, 0.002), (0.67, 0.018), (0.532, 0.134)),
    _cell("ensemble", "4x256", 0.25, None, (0.964, 0.002), (0.621, 0.03), (0.484, 0.124)),
]


def find_reference(
    method: str,
    architecture: str,
    dropout: float,
    percentiles: Optional[str] = None,
) -> Optional[ReferenceCell]:
    for cell in REFERENCE_RESULTS:
        if (
            cell.method == method
            and cell.architecture == architecture
            and abs(cell.dropout - dropout) < 1e-9
            and (method != "inference" or cell.percentiles == percentiles)
        ):
            return cell
    return None


# Desk-scale tolerance bands: (method, architecture, dropout, preset) ->
# {rate: (low, high)}.
ACCEPTANCE_TARGETS: Dict[Tuple[str, str, float, Optional[str]], Dict[str, Tuple[float, float]]] = {
    ("inference", "2x1024", 0.5, "q3"): {"tn_ood": (0.90, 1.0), "tn": (0.90, 1.0), "tp": (0.70, 0.82)},
    ("inference", "2x1024", 0.5, "q2"): {"tp": (0.80, 1.0), "tn": (0.80, 1.0), "tn_ood": (0.80, 1.0)},
    ("mc_dropout", "2x1024", 0.2, None): {"tp": (0.95, 1.0), "tn": (0.0, 0.55), "tn_ood": (0.0, 0.45)},
}
