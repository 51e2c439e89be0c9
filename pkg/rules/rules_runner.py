from __future__ import annotations

"""
Rules Runner – aggregate all audit rules for one experiment.

Runs

- calibration rules (collected while each held-out label was fitted)
- metric rules on every scored set
- reference rules on the summary table

and returns one combined list of RuleResult objects.

USAGE
-----

    from rules.rules_runner import run_all_rules

    results = run_all_rules(result)
    for r in results:
        print(r.level, r.scope, r.code, r.message)

Scopes can be selected:

    results = run_all_rules(result, include_scopes={"calibration", "metrics"})
"""

import logging
from typing import TYPE_CHECKING, Dict, List, Optional

import pandas as pd

from core.errors import LatentUQError
from core.models import RuleResult
from rules.rules_metrics import check_monotonic, check_rates
from rules.rules_reference import check_reference

if TYPE_CHECKING:
    from evaluation.experiment import ExperimentResult

logger = logging.getLogger(__name__)

SCOPES = ("calibration", "metrics", "reference")


def _failed(scope: str, exc: Exception) -> RuleResult:
    logger.exception("%s rules failed", scope)
    return RuleResult("ERROR", f"{scope} rules could not run: {exc}", scope, "RUN-001")


# =============================================================================
# Main aggregator
# =============================================================================

def run_all_rules(
    result: "ExperimentResult",
    include_scopes: Optional[set[str]] = None,
    sweep_points: int = 101,
) -> List[RuleResult]:
    """
    Parameters
    ----------
    result : ExperimentResult
    include_scopes : subset of {"calibration", "metrics", "reference"}; None runs all.
    sweep_points : thresholds used by the monotonicity check.
    """
    if include_scopes is not None:
        include_scopes = {s.lower() for s in include_scopes}

    def wanted(scope: str) -> bool:
        return include_scopes is None or scope in include_scopes

    all_results: List[RuleResult] = []

    if wanted("calibration"):
        for label_run in result.labels:
            all_results.extend(r for r in label_run.audit if r.scope == "calibration")

    if wanted("metrics"):
        for label_run in result.labels:
            all_results.extend(r for r in label_run.audit if r.scope == "metrics")
        for run in result.runs:
            context = {"label": run.label, "method": run.method, "config": run.config}
            try:
                all_results.extend(check_rates(run.metrics, run.scored, context))
                all_results.extend(check_monotonic(run.scored, sweep_points, context))
            except LatentUQError as exc:
                all_results.append(_failed("metrics", exc))

    if wanted("reference"):
        try:
            all_results.extend(check_reference(result.summary))
        except (KeyError, LatentUQError) as exc:
            all_results.append(_failed("reference", exc))

    return all_results


# =============================================================================
# Grouping and tables
# =============================================================================

def group_results_by_scope(results: List[RuleResult]) -> Dict[str, List[RuleResult]]:
    out: Dict[str, List[RuleResult]] = {}
    for r in results:
        out.setdefault((r.scope or "general").lower(), []).append(r)
    return out


def group_results_by_level(results: List[RuleResult]) -> Dict[str, List[RuleResult]]:
    """
    Group RuleResult items by level ("ERROR", "WARNING", "INFO").

    Returns
    -------
    dict : {level -> list[RuleResult]}
    """
    out: Dict[str, List[RuleResult]] = {}
    for r in results:
        lvl = (r.level or "INFO").upper()
        out.setdefault(lvl, []).append(r)
    return out


def results_frame(results: List[RuleResult]) -> pd.DataFrame:
    """level, scope, code, message, context (as key=value pairs)."""
    rows = [
        {
            "level": r.level,
            "scope": r.scope,
            "code": r.code,
            "message": r.message,
            "context": "; ".join(f"{k}={v}" for k, v in r.context.items()),
        }
        for r in results
    ]
    return pd.DataFrame(rows, columns=["level", "scope", "code", "message", "context"])
