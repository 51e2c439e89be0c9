from __future__ import annotations

from dataclasses import replace

import numpy as np
import pandas as pd

from core.models import RuleResult
from engines.latent_engine import ConfidenceSets, fit_uq_model, score_latents
from evaluation.experiment import RESULT_COLUMNS
from rules.rules_calibration import check_calibration
from rules.rules_metrics import check_product_bound
from rules.rules_reference import check_reference
from rules.rules_runner import group_results_by_level, group_results_by_scope, results_frame


def _row(method, arch, dropout, alpha, beta, tp, tn, tn_ood):
    return {
        "method": method, "architecture": arch, "dropout": dropout,
        "alpha": alpha, "beta": beta, "threshold": 0.5,
        "tp_mean": tp, "tp_std": 0.0, "tn_mean": tn, "tn_std": 0.0,
        "tnood_mean": tn_ood, "tnood_std": 0.0,
    }


def _summary(*rows):
    return pd.DataFrame(list(rows), columns=RESULT_COLUMNS)


def _codes(results, code):
    return [r for r in results if r.code == code]


def _sets(n=400, seed=0):
    rng = np.random.default_rng(seed)
    return ConfidenceSets(
        latents=[[rng.standard_normal((n, 2)) + k for k in range(2)] for _ in range(2)],
        counts=[n, n],
    )


# =============================================================================
# Reference comparison
# =============================================================================

def test_matching_reference_is_info():
    summary = _summary(_row("inference", "2x1024", 0.5, 3.0, 90.0, 0.753, 0.968, 0.973))
    matches = _codes(check_reference(summary), "REF-001")
    assert len(matches) == 3
    assert all(r.level == "INFO" for r in matches)
    assert matches[0].context["percentiles"] == "q3"


def test_far_from_reference_warns():
    summary = _summary(_row("mc_dropout", "2x1024", 0.2, np.nan, np.nan, 0.5, 0.4, 0.27))
    matches = _codes(check_reference(summary), "REF-001")
    levels = {r.context["rate"]: r.level for r in matches}
    assert levels == {"tp": "WARNING", "tn": "INFO", "tn_ood": "INFO"}


def test_unknown_cell_is_skipped():
    summary = _summary(_row("inference", "3x64", 0.3, 1.0, 2.0, 0.5, 0.5, 0.5))
    assert check_reference(summary) == []


def test_acceptance_band():
    summary = _summary(_row("inference", "2x1024", 0.5, 3.0, 90.0, 0.95, 0.95, 0.95))
    bands = {r.context["rate"]: r.level for r in _codes(check_reference(summary), "REF-002")}
    assert bands == {"tp": "WARNING", "tn": "INFO", "tn_ood": "INFO"}


def test_ood_ordering():
    summary = _summary(
        _row("inference", "2x1024", 0.2, 3.0, 90.0, 0.75, 0.95, 0.97),
        _row("mc_dropout", "2x1024", 0.2, np.nan, np.nan, 0.98, 0.4, 0.27),
        _row("ensemble", "2x1024", 0.2, np.nan, np.nan, 0.95, 0.68, 0.52),
        _row("inference", "4x256", 0.1, 7.0, 90.0, 0.75, 0.95, 0.30),
        _row("ensemble", "4x256", 0.1, np.nan, np.nan, 0.95, 0.67, 0.53),
    )
    ordering = _codes(check_reference(summary), "REF-003")
    assert [(r.context["architecture"], r.level) for r in ordering] == [("2x1024", "INFO"), ("4x256", "WARNING")]


# =============================================================================
# Calibration and metric rules
# =============================================================================

def test_fitted_model_is_calibrated():
    sets = _sets()
    results = check_calibration(fit_uq_model(sets, 3.0, 90.0), sets, {"label": 0})
    assert len(results) == 1
    assert (results[0].level, results[0].code) == ("INFO", "CAL-001")
    assert results[0].context == {"label": 0}


def test_inverted_thresholds_are_errors():
    sets = _sets()
    model = fit_uq_model(sets, 3.0, 90.0)
    broken = replace(model, q_alpha=model.q_beta + 1.0)
    results = check_calibration(broken, sets)
    assert len(results) == 4
    assert all(r.level == "ERROR" and r.code == "CAL-002" for r in results)


def test_shifted_thresholds_warn():
    sets = _sets()
    model = fit_uq_model(sets, 3.0, 90.0)
    shifted = replace(model, q_alpha=model.q_alpha - 5.0, q_beta=model.q_beta - 5.0)
    results = check_calibration(shifted, sets)
    assert results
    assert all(r.level == "WARNING" for r in results)


def test_product_bound_holds_for_real_scores():
    sets = _sets()
    model = fit_uq_model(sets, 3.0, 90.0)
    batch = score_latents(model, [sets.latents[0][0], sets.latents[1][0]], np.zeros(400, dtype=int))
    assert check_product_bound(batch, model.active_layers) == []


# =============================================================================
# Grouping
# =============================================================================

def test_grouping_and_table():
    results = [
        RuleResult("ERROR", "a", "metrics", "MET-001"),
        RuleResult("info", "b", "calibration", "CAL-001", {"label": 3}),
        RuleResult("WARNING", "c", "metrics", "MET-002"),
    ]
    by_level = group_results_by_level(results)
    assert sorted(by_level) == ["ERROR", "INFO", "WARNING"]
    assert [r.message for r in group_results_by_scope(results)["metrics"]] == ["a", "c"]
    table = results_frame(results)
    assert table.columns.tolist() == ["level", "scope", "code", "message", "context"]
    assert table.loc[1, "context"] == "label=3"
