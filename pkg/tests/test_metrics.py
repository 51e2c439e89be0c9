from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from core.errors import BadFormat, BadParameter, EmptyInput
from evaluation.metrics import (
    UNKNOWN_LABEL,
    ScoredSet,
    evaluate,
    read_scores,
    threshold_sweep,
    write_scores,
)


def _scored(well=(), mis=(), ood=()):
    # well-classified rows: true 0, predicted 0; misclassified: true 0, predicted 1
    n_w, n_m, n_o = len(well), len(mis), len(ood)
    true = [0] * (n_w + n_m) + [9] * n_o
    pred = [0] * n_w + [1] * n_m + [0] * n_o
    conf = list(well) + list(mis) + list(ood)
    is_ood = [False] * (n_w + n_m) + [True] * n_o
    return ScoredSet(np.array(true), np.array(pred), np.array(conf, dtype=float), np.array(is_ood))


def _random_scored(rng, n=200):
    true = rng.integers(0, 3, n)
    pred = np.where(rng.random(n) < 0.8, true, rng.integers(0, 3, n))
    return ScoredSet(true, pred, rng.random(n), rng.random(n) < 0.2)


def test_tp_definition():
    m = evaluate(_scored(well=[1, 1, 0.6, 0.3], mis=[0.1], ood=[0.1]), 0.5)
    assert m.tp_rate == pytest.approx(3 / 4)


def test_tn_definition():
    m = evaluate(_scored(well=[1.0], mis=[0.2, 0.9], ood=[0.1]), 0.5)
    assert m.tn_rate == pytest.approx(1 / 2)


def test_tn_ood_definition():
    m = evaluate(_scored(well=[1.0], mis=[0.2], ood=[0.1, 0.4, 0.99]), 0.5)
    assert m.tn_ood_rate == pytest.approx(2 / 3)
    assert (m.well_classified, m.misclassified, m.ood) == (1, 1, 3)


def test_acceptance_is_inclusive():
    m = evaluate(_scored(well=[0.5], mis=[0.5], ood=[0.5]), 0.5)
    assert (m.tp_rate, m.tn_rate, m.tn_ood_rate) == (1.0, 0.0, 0.0)


def test_extreme_thresholds():
    rng = np.random.default_rng(0)
    scored = _random_scored(rng)
    low = evaluate(scored, 0.0)
    assert (low.tp_rate, low.tn_rate, low.tn_ood_rate) == (1.0, 0.0, 0.0)
    high = evaluate(ScoredSet(scored.true_label, scored.predicted_label, scored.confidence * 0.9, scored.is_ood), 0.95)
    assert (high.tp_rate, high.tn_rate, high.tn_ood_rate) == (0.0, 1.0, 1.0)


def test_rates_are_monotone_in_threshold():
    rng = np.random.default_rng(1)
    for _ in range(20):
        sweep = threshold_sweep(_random_scored(rng))
        assert len(sweep) == 101
        assert np.all(np.diff(sweep["tp"]) <= 0)
        assert np.all(np.diff(sweep["tn"]) >= 0)
        assert np.all(np.diff(sweep["tn_ood"]) >= 0)


def test_sweep_matches_evaluate():
    scored = _random_scored(np.random.default_rng(2))
    sweep = threshold_sweep(scored, [0.25, 0.75])
    for _, row in sweep.iterrows():
        m = evaluate(scored, row["threshold"])
        assert row["tp"] == pytest.approx(m.tp_rate)
        assert row["tn_ood"] == pytest.approx(m.tn_ood_rate)


def test_empty_group_is_absent():
    m = evaluate(_scored(well=[0.9, 0.1], ood=[0.2]), 0.5)
    assert m.tn_rate is None
    assert m.misclassified == 0
    sweep = threshold_sweep(_scored(well=[0.9]))
    assert sweep["tn"].isna().all()


def test_evaluate_errors():
    with pytest.raises(EmptyInput):
        evaluate(_scored(), 0.5)
    with pytest.raises(BadParameter):
        evaluate(_scored(well=[0.5]), 1.5)


def test_confidence_range_is_enforced():
    with pytest.raises(BadParameter):
        _scored(well=[1.2])
    with pytest.raises(BadParameter):
        _scored(well=[np.nan])


def test_scores_file_round_trip(tmp_path):
    scored = _random_scored(np.random.default_rng(3), n=30)
    path = write_scores(scored, tmp_path / "scores.csv")
    assert pd.read_csv(path).columns.tolist() == ["true_label", "predicted_label", "confidence", "group"]
    loaded = read_scores(path)
    assert np.array_equal(loaded.confidence, scored.confidence)
    assert np.array_equal(loaded.is_ood, scored.is_ood)


def test_unknown_group_tag():
    df = pd.DataFrame({"true_label": [0], "predicted_label": [0], "confidence": [0.5], "group": ["other"]})
    with pytest.raises(BadFormat):
        ScoredSet.from_frame(df)


def test_reloaded_scores_keep_threshold_decisions(tmp_path):
    # 6 of 10 votes is exactly the 0.6 threshold and must stay accepted
    scored = _scored(well=[0.6, 0.3, 0.7], mis=[0.6], ood=[0.7])
    loaded = read_scores(write_scores(scored, tmp_path / "votes.csv"))
    for a in (0.3, 0.6, 0.7):
        assert evaluate(loaded, a) == evaluate(scored, a)

    rng = np.random.default_rng(4)
    many = ScoredSet(np.zeros(1000), np.zeros(1000), rng.random(1000), np.zeros(1000, dtype=bool))
    assert np.array_equal(read_scores(write_scores(many, tmp_path / "many.csv")).confidence, many.confidence)


@pytest.mark.parametrize(
    "content",
    ["", "true_label,predicted_label\n0,0\n", 'a,b\n"unterminated\n', "true_label,predicted_label,confidence,group\n0,0,high,ood\n"],
    ids=["empty", "missing-columns", "malformed", "non-numeric"],
)
def test_unreadable_scores_file(tmp_path, content):
    path = tmp_path / "scores.csv"
    path.write_text(content)
    with pytest.raises(BadFormat) as info:
        read_scores(path)
    assert str(path) in str(info.value)


def test_unlabeled_rows_are_left_out_of_tp_and_tn():
    scored = ScoredSet(
        np.array([UNKNOWN_LABEL] * 4 + [7, 7]),
        np.array([0, 1, 2, 0, 0, 1]),
        np.array([0.9, 0.2, 0.8, 0.1, 0.3, 0.6]),
        np.array([False] * 4 + [True] * 2),
    )
    m = evaluate(scored, 0.5)
    assert (m.well_classified, m.misclassified, m.ood, m.unlabeled) == (0, 0, 2, 4)
    assert m.tp_rate is None and m.tn_rate is None
    assert m.tn_ood_rate == pytest.approx(0.5)
    sweep = threshold_sweep(scored, [0.5])
    assert np.isnan(sweep.loc[0, "tp"]) and np.isnan(sweep.loc[0, "tn"])


def test_labeled_rows_still_count_next_to_unlabeled():
    scored = ScoredSet(
        np.array([UNKNOWN_LABEL, 2, 2]),
        np.array([1, 2, 0]),
        np.array([0.9, 0.9, 0.1]),
        np.zeros(3, dtype=bool),
    )
    m = evaluate(scored, 0.5)
    assert (m.tp_rate, m.tn_rate, m.unlabeled) == (1.0, 1.0, 1)
