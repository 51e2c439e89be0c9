"""
Model engines.

- mlp_engine      : feed-forward classifier, forward pass, Adam training.
- model_io        : binary model files and fingerprints.
- latent_engine   : latent-space Gaussians, percentile thresholds, confidence.
- uq_io           : binary UQ model files.
- dropout_engine  : MC-dropout votes.
- ensemble_engine : deep-ensemble votes.
"""

from .mlp_engine import Network, TrainingParams, forward, init_network, predict, train
from .latent_engine import UqModel, accept, build_confidence_sets, fit_uq_model, score, score_batch
from .dropout_engine import VoteResult, mc_dropout_score
from .ensemble_engine import Ensemble, ensemble_score, train_ensemble

__all__ = [
    "Network",
    "TrainingParams",
    "forward",
    "init_network",
    "predict",
    "train",
    "UqModel",
    "accept",
    "build_confidence_sets",
    "fit_uq_model",
    "score",
    "score_batch",
    "VoteResult",
    "mc_dropout_score",
    "Ensemble",
    "ensemble_score",
    "train_ensemble",
]
