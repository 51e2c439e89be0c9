from __future__ import annotations

"""
Deep-ensemble baseline: M identically configured networks trained from
distinct seeds; each member votes with its deterministic prediction and the
confidence is the modal vote fraction.

An ensemble persists as a directory holding member_<i>.lcn model files and
manifest.json (member count, seeds, fingerprints).
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from core.errors import BadFormat, BadParameter, BadSeeds, DimensionMismatch, MemberTrainingError
from core.models import Dataset, LayerSpec
from engines.dropout_engine import VoteResult, vote_counts, vote_result, votes_to_results
from engines.mlp_engine import Network, TrainingParams, init_network, predict_dataset, predict, train
from engines.model_io import fingerprint, load_network, save_network

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass
class Ensemble:
    members: List[Network]
    seeds: List[int]

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def input_dim(self) -> int:
        return self.members[0].input_dim

    @property
    def num_classes(self) -> int:
        return self.members[0].num_classes

    def to_dict(self) -> Dict[str, Any]:
        return {
            "members": self.size,
            "seeds": list(self.seeds),
            "fingerprints": [fingerprint(m) for m in self.members],
        }


def _train_member(
    index: int,
    input_dim: int,
    specs: Sequence[LayerSpec],
    num_classes: int,
    data: Dataset,
    hp: TrainingParams,
    seed: int,
) -> Network:
    try:
        net = init_network(input_dim, specs, num_classes, seed)
        trained, history = train(net, data, replace(hp, seed=seed))
    except Exception as exc:
        raise MemberTrainingError(index, exc) from exc
    logger.info("ensemble member %d (seed %d) trained in %d epochs", index, seed, history.epochs)
    return trained


def train_ensemble(
    input_dim: int,
    specs: Sequence[LayerSpec],
    num_classes: int,
    data: Dataset,
    hp: TrainingParams,
    members: int,
    base_seed: int,
    seeds: Optional[Sequence[int]] = None,
    workers: int = 1,
) -> Ensemble:
    """
    Train `members` networks with seeds base_seed .. base_seed + M - 1
    (or the explicit `seeds`); each seed drives both initialisation and
    the training stream.

    Raises
    ------
    BadParameter        : fewer than two members.
    BadSeeds            : repeated seeds, or two members came out identical.
    MemberTrainingError : a member failed; carries its index.
    """
    if members < 2:
        raise BadParameter(f"an ensemble needs at least 2 members, got {members}")
    member_seeds = list(seeds) if seeds is not None else [base_seed + i for i in range(members)]
    if len(member_seeds) != members:
        raise BadParameter(f"{len(member_seeds)} seeds given for {members} members")
    if len(set(member_seeds)) != members:
        raise BadSeeds(f"ensemble seeds must be distinct, got {member_seeds}")

    args = [(i, input_dim, list(specs), num_classes, data, hp, s) for i, s in enumerate(member_seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            nets = list(pool.map(_train_member, *zip(*args)))
    else:
        nets = [_train_member(*a) for a in args]

    prints = [fingerprint(n) for n in nets]
    if len(set(prints)) != len(prints):
        raise BadSeeds("two ensemble members are identical")
    return Ensemble(members=nets, seeds=member_seeds)


# =============================================================================
# Scoring
# =============================================================================

def _check_input(ens: Ensemble, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != ens.input_dim:
        raise DimensionMismatch(f"ensemble expects {ens.input_dim} features, got shape {x.shape}")
    return x


def ensemble_score(ens: Ensemble, x: np.ndarray) -> VoteResult:
    """Modal vote of the members on one input vector."""
    x = _check_input(ens, x)
    if x.ndim != 1:
        raise DimensionMismatch(f"ensemble_score takes one vector, got shape {x.shape}")
    votes = np.array([[predict(m, x)] for m in ens.members])
    return vote_result(vote_counts(votes, ens.num_classes)[0])


def ensemble_batch(ens: Ensemble, data: Union[Dataset, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Modal labels and vote fractions for every row."""
    if isinstance(data, Dataset):
        features = data.features
    else:
        features = np.atleast_2d(_check_input(ens, data))
    ds = Dataset(features, np.zeros(features.shape[0], dtype=np.int64), ens.num_classes)
    votes = np.stack([predict_dataset(m, ds) for m in ens.members])
    return votes_to_results(vote_counts(votes, ens.num_classes))


# =============================================================================
# Persistence
# =============================================================================

def save_ensemble(ens: Ensemble, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, member in enumerate(ens.members):
        name = f"member_{i:02d}.lcn"
        save_network(member, directory / name)
        files.append(name)
    manifest = {**ens.to_dict(), "files": files}
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2))
    return directory


def load_ensemble(directory: Union[str, Path]) -> Ensemble:
    """
    Raises
    ------
    BadFormat : manifest missing or inconsistent with the member files.
    """
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST_NAME).read_text())
    except (OSError, ValueError) as exc:
        raise BadFormat(f"cannot read ensemble manifest in {directory}: {exc}") from exc

    members = [load_network(directory / name) for name in manifest["files"]]
    if len(members) != manifest["members"]:
        raise BadFormat("manifest member count does not match the member files")
    for net, expected in zip(members, manifest["fingerprints"]):
        if fingerprint(net) != expected:
            raise BadFormat("ensemble member fingerprint mismatch")
    return Ensemble(members=members, seeds=[int(s) for s in manifest["seeds"]])
