from __future__ import annotations

"""
Calibration audit for fitted UQ models.

RULES
-----
CAL-001  Self-scores of a confidence set: the share at s = 0 should be about
         alpha percent and the share at s = 1 about (100 - beta) percent.
         Tolerance is 0.5 points or one sample's worth (100 / n), whichever
         is larger.
CAL-002  q_alpha <= q_beta for every (layer, class) cell.
"""

from typing import Any, Dict, List, Optional

import numpy as np

from core.linalg import log_density
from core.models import RuleResult
from engines.latent_engine import ConfidenceSets, UqModel, smoothstep

CALIBRATION_TOLERANCE = 0.5


def calibration_shares(model: UqModel, sets: ConfidenceSets, layer: int, cls: int) -> tuple[float, float]:
    """Percent of confidence-set members at s = 0 and at s = 1 for one cell (0-based layer)."""
    lp = np.atleast_1d(log_density(model.densities[layer][cls], sets.latents[layer][cls]))
    s = np.asarray(smoothstep(lp, model.q_alpha[layer, cls], model.q_beta[layer, cls], model.smoothstep))
    return 100.0 * float(np.mean(s == 0.0)), 100.0 * float(np.mean(s == 1.0))


def rule_threshold_order(model: UqModel, context: Dict[str, Any]) -> List[RuleResult]:
    bad = np.argwhere(model.q_alpha > model.q_beta)
    return [
        RuleResult(
            level="ERROR",
            message=f"q_alpha exceeds q_beta at layer {l + 1}, class {k}",
            scope="calibration",
            code="CAL-002",
            context={**context, "layer": int(l) + 1, "class": int(k)},
        )
        for l, k in bad
    ]


def rule_calibration_shares(
    model: UqModel,
    sets: ConfidenceSets,
    context: Dict[str, Any],
    tolerance: float = CALIBRATION_TOLERANCE,
) -> List[RuleResult]:
    results: List[RuleResult] = []
    worst = 0.0
    for l in model.active_layers:
        for k in range(model.num_classes):
            n = sets.counts[k]
            tol = max(tolerance, 100.0 / n) + 1e-9
            at_zero, at_one = calibration_shares(model, sets, l, k)
            err = max(abs(at_zero - model.alpha), abs(at_one - (100.0 - model.beta)))
            worst = max(worst, err)
            if err > tol:
                results.append(
                    RuleResult(
                        level="WARNING",
                        message=(
                            f"layer {l + 1}, class {k}: {at_zero:.2f}% at s=0 (alpha {model.alpha:g}), "
                            f"{at_one:.2f}% at s=1 (100-beta {100.0 - model.beta:g})"
                        ),
                        scope="calibration",
                        code="CAL-001",
                        context={**context, "layer": l + 1, "class": k, "samples": n},
                    )
                )
    if not results:
        results.append(
            RuleResult(
                level="INFO",
                message=f"calibration within tolerance (worst deviation {worst:.3f} points)",
                scope="calibration",
                code="CAL-001",
                context=dict(context),
            )
        )
    return results


def check_calibration(
    model: UqModel,
    sets: ConfidenceSets,
    context: Optional[Dict[str, Any]] = None,
    tolerance: float = CALIBRATION_TOLERANCE,
) -> List[RuleResult]:
    context = dict(context or {})
    ordering = rule_threshold_order(model, context)
    if ordering:
        return ordering
    return rule_calibration_shares(model, sets, context, tolerance)
