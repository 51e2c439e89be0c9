from __future__ import annotations

"""
Confidence histograms for the well-classified, misclassified and OOD groups.

Bins are uniform on [0, 1]; every bin is half-open [low, high) except the
last, which is closed so that confidence 1 is counted.
"""

from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from core.errors import BadParameter
from evaluation.metrics import ScoredSet

HISTOGRAM_COLUMNS = ["bin_low", "bin_high", "well_classified", "misclassified", "ood"]


def export_histogram(scored: ScoredSet, bins: int = 20) -> pd.DataFrame:
    if bins < 1:
        raise BadParameter(f"bins must be >= 1, got {bins}")
    edges = np.linspace(0.0, 1.0, bins + 1)
    table = {"bin_low": edges[:-1], "bin_high": edges[1:]}
    for name, mask in scored.group_masks().items():
        counts, _ = np.histogram(scored.confidence[mask], bins=edges)
        table[name] = counts.astype(np.int64)
    return pd.DataFrame(table, columns=HISTOGRAM_COLUMNS)


def write_histogram(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False)
    return path
