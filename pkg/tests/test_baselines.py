from __future__ import annotations

import pickle

import numpy as np
import pytest

from core.errors import BadParameter, BadSeeds, MemberTrainingError
from core.models import LayerSpec
from engines.dropout_engine import (
    mc_dropout_batch,
    mc_dropout_counts,
    mc_dropout_score,
    vote_counts,
    vote_result,
    votes_to_results,
)
from engines.ensemble_engine import (
    ensemble_batch,
    ensemble_score,
    load_ensemble,
    save_ensemble,
    train_ensemble,
)
from engines.mlp_engine import TrainingParams, init_network
from engines.model_io import fingerprint

FAST = TrainingParams(batch_size=32, learning_rate=0.01, max_epochs=5, early_stop_accuracy=0.99, seed=0)


def test_vote_counts():
    votes = np.array([[0, 1], [2, 1], [0, 1]])
    assert vote_counts(votes, 3).tolist() == [[2, 0, 1], [0, 3, 0]]


def test_ties_go_to_lowest_label():
    result = vote_result(np.array([0, 2, 2, 1]))
    assert result.predicted_label == 1
    assert result.confidence == pytest.approx(0.4)
    assert result.total_votes == 5


def test_vote_fractions():
    pred, conf = votes_to_results(np.array([[3, 1], [0, 4]]))
    assert pred.tolist() == [0, 1]
    assert conf.tolist() == [0.75, 1.0]


# =============================================================================
# MC-dropout
# =============================================================================

def test_mc_dropout_is_seeded(trained, blobs):
    net, _ = trained
    x = blobs[1].features[:20]
    a = mc_dropout_counts(net, x, 30, seed=7)
    b = mc_dropout_counts(net, x, 30, seed=7)
    assert np.array_equal(a, b)
    assert np.all(a.sum(axis=1) == 30)


def test_mc_dropout_confidence_grid(trained, blobs):
    net, _ = trained
    _, conf = mc_dropout_batch(net, blobs[1].features, 40, seed=1)
    assert np.allclose(conf * 40, np.round(conf * 40))
    assert np.all(conf >= 1.0 / net.num_classes)


def test_mc_dropout_single_matches_batch(trained, blobs):
    net, _ = trained
    x = blobs[1].features[:1]
    single = mc_dropout_score(net, x[0], 25, seed=3)
    pred, conf = mc_dropout_batch(net, x, 25, seed=3)
    assert single.predicted_label == int(pred[0])
    assert single.confidence == pytest.approx(conf[0])


def test_network_without_dropout_is_unanimous(blobs):
    net = init_network(4, LayerSpec.hidden_stack([5]), 3, seed=0)
    _, conf = mc_dropout_batch(net, blobs[1].features[:10], 10, seed=0)
    assert np.all(conf == 1.0)


def test_mc_dropout_needs_a_pass(trained):
    with pytest.raises(BadParameter):
        mc_dropout_counts(trained[0], np.zeros((1, 4)), 0, seed=0)


# =============================================================================
# Ensembles
# =============================================================================

@pytest.fixture(scope="module")
def ensemble(blobs):
    train_set, _ = blobs
    return train_ensemble(4, LayerSpec.hidden_stack([8], 0.1), 3, train_set, FAST, members=3, base_seed=20)


def test_members_differ(ensemble):
    assert ensemble.size == 3
    assert ensemble.seeds == [20, 21, 22]
    assert len({fingerprint(m) for m in ensemble.members}) == 3


def test_ensemble_votes(ensemble, blobs):
    pred, conf = ensemble_batch(ensemble, blobs[1])
    assert pred.shape == (len(blobs[1]),)
    assert set(np.round(conf * 3).astype(int)) <= {1, 2, 3}
    single = ensemble_score(ensemble, blobs[1].features[0])
    assert single.predicted_label == int(pred[0])
    assert single.confidence == pytest.approx(conf[0])


def test_ensemble_directory_round_trip(ensemble, tmp_path):
    save_ensemble(ensemble, tmp_path / "ens")
    loaded = load_ensemble(tmp_path / "ens")
    assert loaded.seeds == ensemble.seeds
    assert [fingerprint(m) for m in loaded.members] == [fingerprint(m) for m in ensemble.members]


def test_ensemble_parameter_errors(blobs):
    train_set, _ = blobs
    specs = LayerSpec.hidden_stack([4])
    with pytest.raises(BadParameter):
        train_ensemble(4, specs, 3, train_set, FAST, members=1, base_seed=0)
    with pytest.raises(BadSeeds):
        train_ensemble(4, specs, 3, train_set, FAST, members=2, base_seed=0, seeds=[5, 5])


def test_member_failure_carries_index(blobs):
    train_set, _ = blobs
    with pytest.raises(MemberTrainingError) as info:
        train_ensemble(4, LayerSpec.hidden_stack([4]), 2, train_set, FAST, members=2, base_seed=0)
    assert info.value.member_index == 0


def test_context_errors_survive_pickling():
    err = pickle.loads(pickle.dumps(MemberTrainingError(3, ValueError("boom"))))
    assert err.member_index == 3
    assert "boom" in str(err)
