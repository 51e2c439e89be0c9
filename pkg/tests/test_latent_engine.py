from __future__ import annotations

import numpy as np
import pytest

from core.errors import (
    BadParameter,
    BadPercentiles,
    BadThresholds,
    DegenerateSampleCount,
    EmptyClass,
    FingerprintMismatch,
)
from core.models import LayerSpec
from engines.latent_engine import (
    ConfidenceSets,
    accept,
    build_confidence_sets,
    collect_latents,
    fit_uq_model,
    refit_thresholds,
    score,
    score_batch,
    score_latents,
    smoothstep,
)
from engines.mlp_engine import init_network
from engines.model_io import fingerprint
from engines.uq_io import dump_uq_model, parse_uq_model
from rules.rules_calibration import calibration_shares


def _gaussian_sets(n=1000, dims=(3, 2), classes=2, seed=0):
    rng = np.random.default_rng(seed)
    latents = [[rng.standard_normal((n, d)) * (k + 1) + k for k in range(classes)] for d in dims]
    return ConfidenceSets(latents=latents, counts=[n] * classes)


# =============================================================================
# Smoothstep
# =============================================================================

def test_smoothstep_endpoints_and_midpoint():
    assert smoothstep(-10.0, -10.0, -2.0) == 0.0
    assert smoothstep(-2.0, -10.0, -2.0) == 1.0
    assert smoothstep(-6.0, -10.0, -2.0) == pytest.approx(0.5)
    assert smoothstep(-50.0, -10.0, -2.0) == 0.0
    assert smoothstep(3.0, -10.0, -2.0) == 1.0


def test_smoothstep_is_monotone():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        qa, qb = np.sort(rng.normal(0.0, 50.0, 2))
        lp = np.sort(rng.uniform(qa - 10.0, qb + 10.0, 25))
        s = smoothstep(lp, qa, qb)
        assert np.all(np.diff(s) >= 0.0)
        assert np.all((s >= 0.0) & (s <= 1.0))


def test_smoothstep_shift_invariance_is_exact():
    rng = np.random.default_rng(1)
    for _ in range(200):
        # multiples of 1/8 with integer shifts keep every difference exact
        qa, qb = np.sort(rng.integers(-400, 400, 2)) / 8.0
        lp = rng.integers(-480, 480, 10) / 8.0
        shift = float(rng.integers(-1000, 1000))
        assert np.array_equal(smoothstep(lp, qa, qb), smoothstep(lp + shift, qa + shift, qb + shift))


def test_equal_thresholds_give_a_step():
    assert smoothstep(1.0, 1.0, 1.0) == 1.0
    assert smoothstep(0.999, 1.0, 1.0) == 0.0
    assert smoothstep(1.5, 1.0, 1.0) == 1.0


def test_inverted_thresholds_are_rejected():
    with pytest.raises(BadThresholds):
        smoothstep(0.0, 1.0, 0.0)


def test_literal_variant_tends_to_half():
    # numerator (x - 1) vanishes at the upper end
    assert smoothstep(-2.0 - 1e-9, -10.0, -2.0, "literal") == pytest.approx(0.5, abs=1e-3)
    assert smoothstep(-2.0 - 1e-9, -10.0, -2.0, "corrected") == pytest.approx(1.0)
    with pytest.raises(BadParameter):
        smoothstep(0.0, -1.0, 1.0, "other")


# =============================================================================
# Fitting and calibration
# =============================================================================

def test_calibration_by_construction():
    sets = _gaussian_sets()
    model = fit_uq_model(sets, 3.0, 90.0)
    for l in range(sets.num_layers):
        for k in range(sets.num_classes):
            at_zero, at_one = calibration_shares(model, sets, l, k)
            assert at_zero == pytest.approx(3.0, abs=0.5)
            assert at_one == pytest.approx(10.0, abs=0.5)


def test_thresholds_are_ordered():
    model = fit_uq_model(_gaussian_sets(n=200), 0.1, 50.0)
    assert model.q_alpha.shape == (2, 2)
    assert np.all(model.q_alpha <= model.q_beta)


def test_parallel_fit_matches_serial():
    sets = _gaussian_sets(n=100)
    serial = fit_uq_model(sets, 3.0, 90.0)
    threaded = fit_uq_model(sets, 3.0, 90.0, workers=4)
    assert np.array_equal(serial.q_alpha, threaded.q_alpha)
    assert np.array_equal(serial.q_beta, threaded.q_beta)


def test_refit_reuses_gaussians():
    sets = _gaussian_sets(n=300)
    base = fit_uq_model(sets, 3.0, 90.0)
    refit = refit_thresholds(base, sets, 0.1, 50.0)
    fresh = fit_uq_model(sets, 0.1, 50.0)
    assert refit.densities is base.densities
    assert np.allclose(refit.q_alpha, fresh.q_alpha)
    assert np.allclose(refit.q_beta, fresh.q_beta)
    assert (refit.alpha, refit.beta) == (0.1, 50.0)


def test_bad_percentiles():
    with pytest.raises(BadPercentiles):
        fit_uq_model(_gaussian_sets(n=10), 50.0, 10.0)
    with pytest.raises(BadPercentiles):
        fit_uq_model(_gaussian_sets(n=10), -1.0, 10.0)


def test_single_point_class_is_degenerate():
    sets = _gaussian_sets(n=10)
    sets.counts[1] = 1
    for layer in sets.latents:
        layer[1] = layer[1][:1]
    with pytest.raises(DegenerateSampleCount):
        fit_uq_model(sets, 3.0, 90.0)


def test_class_without_correct_predictions(blobs):
    train_set, _ = blobs
    net = init_network(4, [LayerSpec(3)], 3, seed=0)
    for w in net.weights:
        w[:] = 0.0
    net.biases[-1][:] = [5.0, 0.0, 0.0]
    with pytest.raises(EmptyClass) as info:
        build_confidence_sets(net, train_set)
    assert info.value.classes == [1, 2]


def test_confidence_sets_keep_correct_points(trained, blobs):
    net, _ = trained
    train_set, _ = blobs
    sets = build_confidence_sets(net, train_set)
    assert sets.num_layers == 2
    assert sum(sets.counts) + sets.dropped == len(train_set)
    assert [sets.latents[l][0].shape[1] for l in range(2)] == [12, 8]


# =============================================================================
# Scoring
# =============================================================================

def test_confidence_is_product_of_layers():
    sets = _gaussian_sets(n=200)
    model = fit_uq_model(sets, 3.0, 90.0)
    rng = np.random.default_rng(2)
    latents = [rng.standard_normal((30, 3)), rng.standard_normal((30, 2))]
    predicted = rng.integers(0, 2, 30)
    batch = score_latents(model, latents, predicted)
    assert np.allclose(batch.confidence, batch.s[:, 0] * batch.s[:, 1])
    assert np.all(batch.confidence <= batch.s.min(axis=1) + 1e-15)

    first_only = score_latents(model.with_options(layers=[1]), latents, predicted)
    assert np.array_equal(first_only.confidence, first_only.s[:, 0])


def test_score_single_and_batch_agree(trained, blobs):
    net, _ = trained
    train_set, test_set = blobs
    sets = build_confidence_sets(net, train_set)
    model = fit_uq_model(sets, 3.0, 90.0, network_fingerprint=fingerprint(net))
    batch = score_batch(model, net, test_set.features[:5])
    report = score(model, net, test_set.features[3])
    assert report.predicted_label == int(batch.predicted[3])
    assert report.confidence == pytest.approx(batch.confidence[3])
    assert len(report.s) == 2
    _, preds = collect_latents(net, test_set.features[:5])
    assert np.array_equal(preds, batch.predicted)


def test_fingerprint_mismatch(trained, blobs):
    net, _ = trained
    train_set, test_set = blobs
    model = fit_uq_model(build_confidence_sets(net, train_set), 3.0, 90.0, network_fingerprint=fingerprint(net))
    other = net.copy()
    other.biases[0][0] += 1.0
    with pytest.raises(FingerprintMismatch):
        score_batch(model, other, test_set.features[:2])


def test_accept_is_inclusive():
    sets = _gaussian_sets(n=50)
    model = fit_uq_model(sets, 3.0, 90.0)
    batch = score_latents(model, [sets.latents[0][0][:1], sets.latents[1][0][:1]], np.array([0]))
    report = batch.report(0)
    assert accept(report, report.confidence) is True
    assert report.accepted is True
    assert accept(report, 0.0) is True
    with pytest.raises(BadParameter):
        accept(report, 1.5)


def test_uq_model_bytes_round_trip():
    sets = _gaussian_sets(n=50)
    model = fit_uq_model(sets, 3.0, 90.0, network_fingerprint="ab" * 32).with_options(
        layers=[2], smoothstep="literal"
    )
    data = dump_uq_model(model)
    loaded = parse_uq_model(data)
    assert dump_uq_model(loaded) == data
    assert loaded.layers == (2,)
    assert loaded.smoothstep == "literal"
    assert loaded.network_fingerprint == "ab" * 32
    assert np.array_equal(loaded.q_alpha, model.q_alpha)
