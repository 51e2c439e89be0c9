from __future__ import annotations

"""
Comparison of experiment summaries against the reference results.

Input is the results table produced by evaluation.experiment.summarize
(columns method, architecture, dropout, alpha, beta, threshold,
tp_mean ... tnood_std).

RULES
-----
REF-001  Each rate within max(3 std, REFERENCE_SLACK) of the reference mean.
REF-002  Each rate inside the acceptance band, where one is defined.
REF-003  Inference with the strictest percentile pair of an architecture
         detects more OOD inputs than both baselines of the same cell.
"""

import math
from typing import Any, Dict, List, Optional

import pandas as pd

from core.models import RuleResult
from knowledge.presets import ACCEPTANCE_TARGETS, ARCHITECTURES, find_reference, preset_name

REFERENCE_SLACK = 0.05
_RATE_COLUMNS = {"tp": "tp_mean", "tn": "tn_mean", "tn_ood": "tnood_mean"}


def _row_preset(row: pd.Series) -> Optional[str]:
    if row["method"] != "inference" or pd.isna(row["alpha"]):
        return None
    return preset_name(row["alpha"], row["beta"])


def _row_context(row: pd.Series) -> Dict[str, Any]:
    return {
        "method": row["method"],
        "architecture": row["architecture"],
        "dropout": row["dropout"],
        "percentiles": _row_preset(row),
    }


def _as_dropout(value: Any) -> Optional[float]:
    try:
        return float(value)
    except (TypeError, ValueError):
        return None


def rule_reference_match(row: pd.Series) -> List[RuleResult]:
    dropout = _as_dropout(row["dropout"])
    if dropout is None:
        return []
    cell = find_reference(row["method"], row["architecture"], dropout, _row_preset(row))
    if cell is None:
        return []

    out: List[RuleResult] = []
    expected = {"tp": cell.tp, "tn": cell.tn, "tn_ood": cell.tn_ood}
    for rate, column in _RATE_COLUMNS.items():
        measured = row[column]
        if pd.isna(measured):
            continue
        ref_mean, ref_std = expected[rate]
        slack = max(3.0 * ref_std, REFERENCE_SLACK)
        inside = abs(measured - ref_mean) <= slack
        out.append(
            RuleResult(
                level="INFO" if inside else "WARNING",
                message=f"{rate} {measured:.3f} vs reference {ref_mean:.3f} +/- {ref_std:.3f}",
                scope="reference",
                code="REF-001",
                context={**_row_context(row), "rate": rate, "measured": float(measured), "reference": ref_mean},
            )
        )
    return out


def rule_acceptance_band(row: pd.Series) -> List[RuleResult]:
    dropout = _as_dropout(row["dropout"])
    if dropout is None:
        return []
    preset = _row_preset(row)
    bands = None
    for (method, arch, rate_dropout, q), targets in ACCEPTANCE_TARGETS.items():
        if (method, arch, q) == (row["method"], row["architecture"], preset) and math.isclose(rate_dropout, dropout):
            bands = targets
    if bands is None:
        return []

    out: List[RuleResult] = []
    for rate, (low, high) in bands.items():
        measured = row[_RATE_COLUMNS[rate]]
        if pd.isna(measured):
            continue
        inside = low <= measured <= high
        out.append(
            RuleResult(
                level="INFO" if inside else "WARNING",
                message=f"{rate} {measured:.3f} {'inside' if inside else 'outside'} acceptance band [{low}, {high}]",
                scope="reference",
                code="REF-002",
                context={**_row_context(row), "rate": rate, "measured": float(measured)},
            )
        )
    return out


def rule_ood_ordering(summary: pd.DataFrame) -> List[RuleResult]:
    strict = {preset.percentile_presets[-1] for preset in ARCHITECTURES.values()}
    out: List[RuleResult] = []
    for (arch, dropout), cell in summary.groupby(["architecture", "dropout"], sort=False):
        baselines = cell[cell["method"].isin(["mc_dropout", "ensemble"])]
        if baselines.empty:
            continue
        for _, row in cell[cell["method"] == "inference"].iterrows():
            if _row_preset(row) not in strict or pd.isna(row["tnood_mean"]):
                continue
            best = baselines["tnood_mean"].max()
            holds = bool(row["tnood_mean"] > best)
            out.append(
                RuleResult(
                    level="INFO" if holds else "WARNING",
                    message=(
                        f"inference TN-OOD {row['tnood_mean']:.3f} "
                        f"{'above' if holds else 'not above'} best baseline {best:.3f}"
                    ),
                    scope="reference",
                    code="REF-003",
                    context={**_row_context(row)},
                )
            )
    return out


def check_reference(summary: pd.DataFrame) -> List[RuleResult]:
    results: List[RuleResult] = []
    for _, row in summary.iterrows():
        results.extend(rule_reference_match(row))
        results.extend(rule_acceptance_band(row))
    results.extend(rule_ood_ordering(summary))
    return results
