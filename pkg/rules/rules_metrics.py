from __future__ import annotations

"""
Metric sanity rules.

RULES
-----
MET-001  Every present rate lies in [0, 1] and the counts behind it add up.
MET-002  Raising the threshold never increases TP and never decreases TN or
         TN-OOD (checked over a sweep).
MET-003  A product confidence never exceeds the smallest per-layer value
         among the active layers.
"""

from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from core.models import RuleResult
from engines.latent_engine import BatchConfidence
from evaluation.metrics import Metrics, ScoredSet, sweep_thresholds, threshold_sweep


def check_rates(metrics: Metrics, scored: ScoredSet, context: Optional[Dict[str, Any]] = None) -> List[RuleResult]:
    context = dict(context or {})
    out: List[RuleResult] = []
    for name in ("tp", "tn", "tn_ood"):
        rate = metrics.rate(name)
        if rate is not None and not 0.0 <= rate <= 1.0:
            out.append(RuleResult("ERROR", f"{name} rate {rate} outside [0, 1]", "metrics", "MET-001", context))
    if metrics.well_classified + metrics.misclassified + metrics.ood != len(scored):
        out.append(RuleResult("ERROR", "metric groups do not cover the scored set", "metrics", "MET-001", context))
    return out


def check_monotonic(scored: ScoredSet, points: int = 101, context: Optional[Dict[str, Any]] = None) -> List[RuleResult]:
    context = dict(context or {})
    sweep = threshold_sweep(scored, sweep_thresholds(points))
    out: List[RuleResult] = []
    checks = (("tp", lambda d: d > 1e-12), ("tn", lambda d: d < -1e-12), ("tn_ood", lambda d: d < -1e-12))
    for column, violates in checks:
        values = sweep[column].to_numpy()
        if np.all(np.isnan(values)):
            continue
        if np.any(violates(np.diff(values))):
            out.append(
                RuleResult("ERROR", f"{column} is not monotone in the threshold", "metrics", "MET-002", context)
            )
    return out


def check_product_bound(
    batch: BatchConfidence,
    active_layers: Sequence[int],
    context: Optional[Dict[str, Any]] = None,
) -> List[RuleResult]:
    context = dict(context or {})
    if len(batch) == 0:
        return []
    floor = batch.s[:, list(active_layers)].min(axis=1)
    over = int(np.sum(batch.confidence > floor + 1e-12))
    if over:
        return [
            RuleResult(
                "ERROR",
                f"{over} confidence value(s) exceed the smallest per-layer value",
                "metrics",
                "MET-003",
                context,
            )
        ]
    return []
