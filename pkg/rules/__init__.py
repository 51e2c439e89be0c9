"""
Audit rules for experiment results.

Exports:
- run_all_rules          : calibration, metric and reference rules for one ExperimentResult.
- check_calibration      : per-cell calibration audit of a fitted UQ model.
- check_reference        : summary table against the reference rates.
- group_results_by_level : RuleResult objects keyed by ERROR/WARNING/INFO.
- group_results_by_scope : RuleResult objects keyed by scope.
- results_frame          : findings as an audit table.
"""

from .rules_calibration import check_calibration
from .rules_reference import check_reference
from .rules_runner import (
    group_results_by_level,
    group_results_by_scope,
    results_frame,
    run_all_rules,
)

__all__ = [
    "check_calibration",
    "check_reference",
    "group_results_by_level",
    "group_results_by_scope",
    "results_frame",
    "run_all_rules",
]
