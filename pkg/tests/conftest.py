from __future__ import annotations

import pytest

from core.models import LayerSpec
from data.synthetic import train_test_blobs
from engines.mlp_engine import TrainingParams, init_network, train


@pytest.fixture(scope="session")
def blobs():
    """(train, test): 3 well separated classes in 4 dimensions."""
    return train_test_blobs(3, 4, 80, 30, 8.0, seed=5)


@pytest.fixture(scope="session")
def trained(blobs):
    """Small dropout network trained on the blobs."""
    train_set, _ = blobs
    net = init_network(train_set.input_dim, LayerSpec.hidden_stack([12, 8], 0.2), train_set.num_classes, seed=1)
    hp = TrainingParams(batch_size=32, learning_rate=0.01, max_epochs=100, early_stop_accuracy=0.98, seed=2)
    model, history = train(net, train_set, hp)
    return model, history
