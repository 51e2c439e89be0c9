from __future__ import annotations

"""
Feed-forward classifier engine (multilayer perceptron).

Each layer computes

    X(l) = sigma(W_l @ X(l-1) + B_l)

with ReLU (or identity) on the hidden layers and identity on the final
layer, whose K outputs are the logits. The latent representation of an
input is the list of post-activation hidden outputs X(1) .. X(L-1).

Dropout is applied to hidden-layer outputs only, as inverted dropout:
a unit is zeroed with probability `rate` and survivors are scaled by
1 / (1 - rate), so deterministic inference needs no rescaling.

Training is minibatch Adam on softmax cross-entropy with early stopping on
training-set accuracy.

All functions accept one input vector (D,) or a batch (n, D).
"""

import logging
import sys
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, List, Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import log_softmax, softmax
from tqdm import tqdm

from core.errors import (
    BadArchitecture,
    BadParameter,
    DimensionMismatch,
    Diverged,
    EmptyDataset,
)
from core.models import Dataset, LayerSpec
from knowledge.presets import EARLY_STOP_ACCURACY

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.Generator]
ForwardMode = Literal["deterministic", "dropout"]

# Rows per chunk when evaluating a whole dataset.
EVAL_CHUNK = 4096


# =============================================================================
# Network
# =============================================================================

@dataclass
class Network:
    """
    Ordered dense layers.

    Attributes
    ----------
    input_dim : D.
    layers    : hidden LayerSpecs followed by the output layer
                (width K, identity activation, no dropout).
    weights   : W_l with shape (width_l, width_{l-1}).
    biases    : B_l with shape (width_l,).
    seed      : initialisation seed.
    """

    input_dim: int
    layers: List[LayerSpec]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    seed: int

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def num_hidden(self) -> int:
        return len(self.layers) - 1

    @property
    def hidden_layers(self) -> List[LayerSpec]:
        return self.layers[:-1]

    @property
    def num_classes(self) -> int:
        return self.layers[-1].width

    @property
    def has_dropout(self) -> bool:
        return any(spec.dropout_rate > 0.0 for spec in self.hidden_layers)

    def copy(self) -> "Network":
        return Network(
            input_dim=self.input_dim,
            layers=list(self.layers),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            seed=self.seed,
        )

    def describe(self) -> str:
        """Short architecture label, e.g. '2x[1024]' or '[512,256]'."""
        widths = [spec.width for spec in self.hidden_layers]
        if len(set(widths)) == 1:
            return f"{len(widths)}x[{widths[0]}]"
        return "[" + ",".join(str(w) for w in widths) + "]"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "input_dim": self.input_dim,
            "layers": [spec.to_dict() for spec in self.layers],
            "seed": self.seed,
        }


@dataclass
class LatentTrace:
    """
    Result of one forward pass.

    hidden : post-activation outputs of the L-1 hidden layers.
    logits : final-layer outputs.
    probs  : softmax(logits).

    For a batch input every entry carries a leading sample axis.
    """

    hidden: List[np.ndarray]
    logits: np.ndarray
    probs: np.ndarray

    @property
    def predicted(self) -> Union[int, np.ndarray]:
        pred = np.argmax(self.probs, axis=-1)
        return int(pred) if np.ndim(pred) == 0 else pred


def init_network(
    input_dim: int,
    specs: Sequence[LayerSpec],
    num_classes: int,
    seed: int,
) -> Network:
    """
    Build a network with scaled-uniform weights
    U(-sqrt(6 / (fan_in + fan_out)), +sqrt(...)) and zero biases.

    Raises
    ------
    BadArchitecture : no hidden layer, input_dim < 1 or num_classes < 2.
    """
    if num_classes < 2:
        raise BadArchitecture(f"num_classes must be >= 2, got {num_classes}")
    if input_dim < 1:
        raise BadArchitecture(f"input_dim must be >= 1, got {input_dim}")
    if len(specs) < 1:
        raise BadArchitecture("network needs at least one hidden layer")

    layers = list(specs) + [LayerSpec(int(num_classes), "identity", 0.0)]
    rng = np.random.default_rng(seed)

    weights: List[np.ndarray] = []
    biases: List[np.ndarray] = []
    fan_in = int(input_dim)
    for spec in layers:
        bound = np.sqrt(6.0 / (fan_in + spec.width))
        weights.append(rng.uniform(-bound, bound, size=(spec.width, fan_in)))
        biases.append(np.zeros(spec.width))
        fan_in = spec.width

    return Network(int(input_dim), layers, weights, biases, int(seed))


# =============================================================================
# Forward pass
# =============================================================================

def _as_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _check_input(net: Network, x: np.ndarray) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim not in (1, 2) or arr.shape[-1] != net.input_dim:
        raise DimensionMismatch(
            f"network expects inputs of dimension {net.input_dim}, got shape {arr.shape}"
        )
    return arr


def _activate(spec: LayerSpec, z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) if spec.activation == "relu" else z


def _dropout_mask(rng: np.random.Generator, rate: float, shape) -> np.ndarray:
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def forward(
    net: Network,
    x: np.ndarray,
    mode: ForwardMode = "deterministic",
    seed: Optional[SeedLike] = None,
) -> LatentTrace:
    """
    Run x through the network and capture every hidden output.

    In "dropout" mode a seed (int or Generator) is required; each hidden
    unit is dropped independently at its layer's dropout_rate.
    """
    h = _check_input(net, x)
    if mode == "dropout":
        if seed is None:
            raise BadParameter("dropout mode needs a seed")
        rng = _as_rng(seed)
    elif mode == "deterministic":
        rng = None
    else:
        raise BadParameter(f"unknown forward mode {mode!r}")

    hidden: List[np.ndarray] = []
    for spec, w, b in zip(net.hidden_layers, net.weights[:-1], net.biases[:-1]):
        h = _activate(spec, h @ w.T + b)
        if rng is not None and spec.dropout_rate > 0.0:
            h = h * _dropout_mask(rng, spec.dropout_rate, h.shape)
        hidden.append(h)

    logits = h @ net.weights[-1].T + net.biases[-1]
    probs = softmax(logits, axis=-1)
    return LatentTrace(hidden=hidden, logits=logits, probs=probs)


def predict(net: Network, x: np.ndarray) -> Union[int, np.ndarray]:
    """Deterministic argmax of the softmax; ties go to the lowest label."""
    return forward(net, x).predicted


def predict_dataset(net: Network, data: Dataset) -> np.ndarray:
    """Deterministic predictions for every row, evaluated in chunks."""
    if len(data) == 0:
        return np.zeros(0, dtype=np.int64)
    preds = [
        np.asarray(predict(net, data.features[i:i + EVAL_CHUNK]))
        for i in range(0, len(data), EVAL_CHUNK)
    ]
    return np.concatenate(preds).astype(np.int64)


def accuracy(net: Network, data: Dataset) -> float:
    if len(data) == 0:
        raise EmptyDataset("accuracy of an empty dataset")
    return float(np.mean(predict_dataset(net, data) == data.labels))


# =============================================================================
# Loss & gradients
# =============================================================================

def loss_and_gradients(
    net: Network,
    x: np.ndarray,
    y: np.ndarray,
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, List[np.ndarray], List[np.ndarray]]:
    """
    Mean softmax cross-entropy over the batch and its gradients.

    When rng is given, dropout masks are drawn for the hidden layers and
    the gradient is taken through them.

    Returns
    -------
    (loss, grad_weights, grad_biases) aligned with net.weights / net.biases.
    """
    x = np.atleast_2d(_check_input(net, x))
    y = np.asarray(y, dtype=np.int64).ravel()
    n = x.shape[0]

    acts = [x]
    pre: List[np.ndarray] = []
    masks: List[Optional[np.ndarray]] = []
    h = x
    for spec, w, b in zip(net.hidden_layers, net.weights[:-1], net.biases[:-1]):
        z = h @ w.T + b
        h = _activate(spec, z)
        mask = None
        if rng is not None and spec.dropout_rate > 0.0:
            mask = _dropout_mask(rng, spec.dropout_rate, h.shape)
            h = h * mask
        pre.append(z)
        masks.append(mask)
        acts.append(h)

    logits = h @ net.weights[-1].T + net.biases[-1]
    logp = log_softmax(logits, axis=1)
    loss = float(-np.mean(logp[np.arange(n), y]))

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grad_w: List[np.ndarray] = [np.empty(0)] * net.num_layers
    grad_b: List[np.ndarray] = [np.empty(0)] * net.num_layers
    for l in range(net.num_layers - 1, -1, -1):
        grad_w[l] = delta.T @ acts[l]
        grad_b[l] = delta.sum(axis=0)
        if l == 0:
            break
        delta = delta @ net.weights[l]
        if masks[l - 1] is not None:
            delta = delta * masks[l - 1]
        if net.layers[l - 1].activation == "relu":
            delta = delta * (pre[l - 1] > 0.0)

    return loss, grad_w, grad_b


# =============================================================================
# Optimiser
# =============================================================================

@dataclass
class AdamState:
    """Adam moments for every parameter array of one network."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        """Update params in place."""
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(net: Network, state: AdamState, x: np.ndarray, y: np.ndarray,
              rng: Optional[np.random.Generator] = None) -> float:
    """One optimiser step on (x, y); returns the pre-step loss."""
    loss, gw, gb = loss_and_gradients(net, x, y, rng)
    state.step(net.weights + net.biases, gw + gb)
    return loss


# =============================================================================
# Training
# =============================================================================

@dataclass(frozen=True)
class TrainingParams:
    """
    batch_size          : minibatch size.
    learning_rate       : Adam step size.
    max_epochs          : hard epoch limit (0 leaves the network untouched).
    early_stop_accuracy : stop once training accuracy reaches this value.
    seed                : drives shuffling and dropout masks.
    """

    batch_size: int = 128
    learning_rate: float = 1e-3
    max_epochs: int = 50
    early_stop_accuracy: float = EARLY_STOP_ACCURACY
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise BadParameter(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise BadParameter(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.max_epochs < 0:
            raise BadParameter(f"max_epochs must be >= 0, got {self.max_epochs}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class TrainingHistory:
    losses: List[float] = field(default_factory=list)
    accuracies: List[float] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.losses)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "epoch": np.arange(1, self.epochs + 1),
                "loss": self.losses,
                "accuracy": self.accuracies,
            }
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epochs": self.epochs,
            "final_loss": self.losses[-1] if self.losses else None,
            "final_accuracy": self.accuracies[-1] if self.accuracies else None,
            "stopped_early": self.stopped_early,
        }


def train(
    net: Network,
    data: Dataset,
    hp: TrainingParams,
    progress: bool = False,
) -> tuple[Network, TrainingHistory]:
    """
    Train a copy of `net` on `data`; the argument is left untouched.

    Raises
    ------
    EmptyDataset      : data has no rows.
    DimensionMismatch : data does not match the network's input or label space.
    Diverged          : a minibatch loss became non-finite.
    """
    if len(data) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if data.input_dim != net.input_dim:
        raise DimensionMismatch(f"data has {data.input_dim} features, network expects {net.input_dim}")
    if data.num_classes != net.num_classes:
        raise DimensionMismatch(f"data has {data.num_classes} classes, network outputs {net.num_classes}")

    model = net.copy()
    history = TrainingHistory()
    if hp.max_epochs == 0:
        return model, history

    shuffle_seq, dropout_seq = np.random.SeedSequence(hp.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)
    state = AdamState(learning_rate=hp.learning_rate)
    n = len(data)

    bar = tqdm(range(hp.max_epochs), desc="train", unit="epoch", file=sys.stderr, disable=not progress, leave=False)
    for epoch in bar:
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, hp.batch_size):
            idx = order[start:start + hp.batch_size]
            loss = adam_step(model, state, data.features[idx], data.labels[idx], dropout_rng)
            if not np.isfinite(loss):
                raise Diverged(f"non-finite loss at epoch {epoch + 1}")
            total += loss * len(idx)

        acc = accuracy(model, data)
        history.losses.append(total / n)
        history.accuracies.append(acc)
        bar.set_postfix(loss=f"{total / n:.4f}", acc=f"{acc:.4f}")
        logger.debug("epoch %d: loss=%.5f accuracy=%.4f", epoch + 1, total / n, acc)

        if acc >= hp.early_stop_accuracy:
            history.stopped_early = True
            break

    if history.stopped_early:
        logger.info("early stop after %d epochs (accuracy %.4f)", history.epochs, history.accuracies[-1])
    else:
        logger.warning(
            "accuracy threshold %.3f not reached in %d epochs (final %.4f)",
            hp.early_stop_accuracy, history.epochs, history.accuracies[-1],
        )
    return model, history
