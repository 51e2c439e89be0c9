from __future__ import annotations

import io
import struct

import numpy as np
import pytest

from core.errors import BadArchitecture, BadFormat, BadParameter, DimensionMismatch, EmptyDataset, VersionMismatch
from core.models import Dataset, LayerSpec
from engines.mlp_engine import (
    AdamState,
    TrainingParams,
    accuracy,
    adam_step,
    forward,
    init_network,
    loss_and_gradients,
    predict,
    train,
)
from engines.model_io import dump_network, fingerprint, load_network, parse_network, save_network


def _net(seed=0, dropout=0.0):
    return init_network(4, [LayerSpec(2, "relu", dropout)], 3, seed)


def test_init_shapes():
    net = init_network(5, LayerSpec.hidden_stack([7, 6]), 4, seed=0)
    assert [w.shape for w in net.weights] == [(7, 5), (6, 7), (4, 6)]
    assert all(np.all(b == 0.0) for b in net.biases)
    assert net.num_hidden == 2
    assert net.num_classes == 4
    bound = np.sqrt(6.0 / (5 + 7))
    assert np.abs(net.weights[0]).max() <= bound


@pytest.mark.parametrize("input_dim, specs, k", [(0, [LayerSpec(2)], 3), (4, [], 3), (4, [LayerSpec(2)], 1)])
def test_bad_architecture(input_dim, specs, k):
    with pytest.raises(BadArchitecture):
        init_network(input_dim, specs, k, seed=0)


def test_forward_trace():
    net = init_network(3, LayerSpec.hidden_stack([5, 4]), 2, seed=1)
    x = np.random.default_rng(0).random((6, 3))
    trace = forward(net, x)
    assert [h.shape for h in trace.hidden] == [(6, 5), (6, 4)]
    assert trace.logits.shape == (6, 2)
    assert np.allclose(trace.probs.sum(axis=1), 1.0)
    assert all(np.all(h >= 0.0) for h in trace.hidden)
    assert isinstance(predict(net, x[0]), int)


def test_forward_rejects_wrong_dimension():
    with pytest.raises(DimensionMismatch):
        forward(_net(), np.zeros(5))


def test_dropout_needs_seed():
    with pytest.raises(BadParameter):
        forward(_net(dropout=0.5), np.zeros(4), mode="dropout")


def test_zero_rate_dropout_is_deterministic():
    net = _net()
    x = np.random.default_rng(1).random((3, 4))
    assert np.array_equal(forward(net, x, "dropout", seed=3).logits, forward(net, x).logits)


def test_inverted_dropout_preserves_expectation():
    net = init_network(3, [LayerSpec(50, "relu", 0.5)], 2, seed=4)
    x = np.full((1, 3), 0.7)
    clean = forward(net, x).hidden[0]
    mean = forward(net, np.repeat(x, 20000, axis=0), "dropout", seed=5).hidden[0].mean(axis=0)
    assert np.allclose(mean, clean, atol=0.05 * max(clean.max(), 1e-3))


def test_gradients_match_finite_differences():
    eps = 1e-5
    for seed in range(5):
        rng = np.random.default_rng(seed)
        net = _net(seed)
        for b in net.biases:
            b[:] = rng.normal(0.0, 0.1, b.shape)
        x = rng.random((6, 4))
        y = rng.integers(0, 3, 6)
        _, gw, gb = loss_and_gradients(net, x, y)

        for params, grads in ((net.weights, gw), (net.biases, gb)):
            for p, g in zip(params, grads):
                for idx in np.ndindex(p.shape):
                    old = p[idx]
                    p[idx] = old + eps
                    up = loss_and_gradients(net, x, y)[0]
                    p[idx] = old - eps
                    down = loss_and_gradients(net, x, y)[0]
                    p[idx] = old
                    numeric = (up - down) / (2 * eps)
                    scale = max(abs(numeric) + abs(g[idx]), 1e-6)
                    assert abs(numeric - g[idx]) / scale < 1e-4


def test_adam_reduces_loss():
    rng = np.random.default_rng(0)
    net = _net(3)
    x = rng.random((16, 4))
    y = rng.integers(0, 3, 16)
    state = AdamState(learning_rate=0.01)
    first = adam_step(net, state, x, y)
    for _ in range(100):
        last = adam_step(net, state, x, y)
    assert last < first
    assert state.step_count == 101



@pytest.mark.parametrize("lr", [1e-3, 1e-4])
def test_single_adam_step_lowers_single_sample_loss(lr):
    rng = np.random.default_rng(11)
    for seed in range(25):
        net = init_network(5, LayerSpec.hidden_stack([8, 6]), 4, seed=seed)
        x = rng.standard_normal((1, 5))
        y = rng.integers(0, 4, 1)
        before = adam_step(net, AdamState(learning_rate=lr), x, y)
        after = loss_and_gradients(net, x, y)[0]
        assert after < before, f"seed {seed}"


def test_training_reaches_threshold(trained, blobs):
    net, history = trained
    train_set, test_set = blobs
    assert history.stopped_early
    assert history.accuracies[-1] >= 0.98
    assert accuracy(net, test_set) > 0.9
    assert list(history.to_frame().columns) == ["epoch", "loss", "accuracy"]


def test_training_is_deterministic_and_leaves_input(blobs):
    train_set, _ = blobs
    net = init_network(4, LayerSpec.hidden_stack([6], 0.1), 3, seed=9)
    before = [w.copy() for w in net.weights]
    hp = TrainingParams(batch_size=16, learning_rate=0.01, max_epochs=3, early_stop_accuracy=1.1, seed=4)
    a, _ = train(net, train_set, hp)
    b, _ = train(net, train_set, hp)
    assert fingerprint(a) == fingerprint(b)
    assert all(np.array_equal(w0, w) for w0, w in zip(before, net.weights))


def test_training_errors(blobs):
    train_set, _ = blobs
    net = init_network(4, [LayerSpec(3)], 3, seed=0)
    empty = Dataset(np.zeros((0, 4)), np.zeros(0, dtype=int), 3)
    with pytest.raises(EmptyDataset):
        train(net, empty, TrainingParams())
    with pytest.raises(DimensionMismatch):
        train(init_network(4, [LayerSpec(3)], 2, seed=0), train_set, TrainingParams())


def test_zero_epochs_returns_untrained_copy(blobs):
    net = init_network(4, [LayerSpec(3)], 3, seed=0)
    model, history = train(net, blobs[0], TrainingParams(max_epochs=0))
    assert history.epochs == 0
    assert fingerprint(model) == fingerprint(net)


# =============================================================================
# Model files
# =============================================================================

def test_save_load_is_bit_identical(trained, tmp_path):
    net, _ = trained
    path = tmp_path / "model.lcn"
    save_network(net, path)
    loaded = load_network(path)
    assert dump_network(loaded) == path.read_bytes()
    assert loaded.seed == net.seed
    assert loaded.layers == net.layers
    x = np.random.default_rng(0).random((5, 4))
    assert np.array_equal(forward(loaded, x).logits, forward(net, x).logits)


def test_stream_round_trip(trained):
    net, _ = trained
    buf = io.BytesIO()
    save_network(net, buf)
    buf.seek(0)
    assert fingerprint(load_network(buf)) == fingerprint(net)


def test_bad_magic_is_rejected(trained):
    data = bytearray(dump_network(trained[0]))
    data[:4] = b"XXXX"
    with pytest.raises(BadFormat):
        parse_network(bytes(data))


def test_unknown_version_is_rejected(trained):
    data = bytearray(dump_network(trained[0]))
    data[4:8] = struct.pack("<I", 999)
    with pytest.raises(VersionMismatch):
        parse_network(bytes(data))


def test_corruption_is_detected(trained):
    data = bytearray(dump_network(trained[0]))
    data[40] ^= 0xFF
    with pytest.raises(BadFormat):
        parse_network(bytes(data))
    with pytest.raises(BadFormat):
        parse_network(bytes(data[:30]))


def test_training_defaults_follow_presets():
    from cli.config import TrainingConfig
    from knowledge.presets import EARLY_STOP_ACCURACY

    assert TrainingParams().early_stop_accuracy == EARLY_STOP_ACCURACY
    assert TrainingConfig().early_stop_accuracy == EARLY_STOP_ACCURACY
