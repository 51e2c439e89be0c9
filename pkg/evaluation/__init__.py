"""
Evaluation: TP / TN / TN-OOD metrics and confidence histograms.

The experiment driver lives in evaluation.experiment and is imported
explicitly.
"""

from .metrics import Metrics, ScoredSet, evaluate, threshold_sweep
from .histogram import export_histogram

__all__ = [
    "Metrics",
    "ScoredSet",
    "evaluate",
    "threshold_sweep",
    "export_histogram",
]
