from __future__ import annotations

"""
Leave-one-label-out experiment.

For every held-out label:

1. split the data (held-out label removed from training, test set split
   into in-distribution and OOD parts),
2. train one network,
3. fit the latent UQ model once and re-calibrate it for every configured
   percentile pair,
4. run MC-dropout on the same network and train an ensemble,
5. score the test inputs with each method and evaluate TP / TN / TN-OOD.

Per-label runs are independent and can run on a process pool; the summary
(mean and sample standard deviation over labels) is computed afterwards
in label order, so results do not depend on scheduling.

Predictions are reported in the original label space.
"""

import contextlib
import functools
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from cli.config import DataConfig, RunConfig, absolute_data_paths, render_config
from core.errors import ExperimentError, LatentUQError
from core.models import Dataset, LayerSpec, OodSplit, RuleResult
from data.idx_loader import load_idx_dataset
from data.ood_split import make_ood_split
from data.synthetic import train_test_blobs
from engines.dropout_engine import mc_dropout_batch
from engines.ensemble_engine import ensemble_batch, train_ensemble
from engines.latent_engine import (
    build_confidence_sets,
    collect_latents,
    fit_uq_model,
    refit_thresholds,
    score_latents,
)
from engines.mlp_engine import Network, TrainingHistory, TrainingParams, init_network, train
from engines.model_io import fingerprint
from evaluation.histogram import export_histogram, write_histogram
from evaluation.metrics import Metrics, ScoredSet, evaluate, sweep_thresholds, threshold_sweep, write_scores
from knowledge.presets import architecture_label, preset_name
from rules.rules_calibration import check_calibration
from rules.rules_metrics import check_product_bound
from rules.rules_runner import results_frame, run_all_rules

logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "method", "architecture", "dropout", "alpha", "beta", "threshold",
    "tp_mean", "tp_std", "tn_mean", "tn_std", "tnood_mean", "tnood_std",
]
RATES = (("tp", "tp_rate"), ("tn", "tn_rate"), ("tnood", "tn_ood_rate"))


# =============================================================================
# Building blocks shared with the CLI
# =============================================================================

@functools.lru_cache(maxsize=4)
def load_datasets(data: DataConfig) -> Tuple[Dataset, Dataset]:
    """(train, test) for the configured source; cached per process."""
    if data.source == "blobs":
        return train_test_blobs(
            data.classes, data.dim, data.train_per_class, data.test_per_class, data.separation, data.seed
        )
    train_set = load_idx_dataset(data.train_images, data.train_labels, data.num_classes)
    test_set = load_idx_dataset(data.test_images, data.test_labels, data.num_classes)
    if test_set.num_classes != train_set.num_classes:
        # inferred label ranges differ; use the wider one for both
        k = max(train_set.num_classes, test_set.num_classes)
        train_set = Dataset(train_set.features, train_set.labels, k)
        test_set = Dataset(test_set.features, test_set.labels, k)
    return train_set, test_set


def network_specs(cfg: RunConfig) -> List[LayerSpec]:
    rates = cfg.network.dropout_rates()
    return [LayerSpec(w, cfg.network.activation, r) for w, r in zip(cfg.network.hidden, rates)]


def training_params(cfg: RunConfig) -> TrainingParams:
    t = cfg.training
    return TrainingParams(
        batch_size=t.batch_size,
        learning_rate=t.learning_rate,
        max_epochs=t.max_epochs,
        early_stop_accuracy=t.early_stop_accuracy,
        seed=t.seed,
    )


def train_network(cfg: RunConfig, data: Dataset, progress: bool = False) -> Tuple[Network, TrainingHistory]:
    net = init_network(data.input_dim, network_specs(cfg), data.num_classes, cfg.network.seed)
    return train(net, data, training_params(cfg), progress=progress)


def percentile_tag(alpha: float, beta: float) -> str:
    """'q3' for a preset pair, otherwise 'a3_b85'."""
    return preset_name(alpha, beta) or f"a{alpha:g}_b{beta:g}"


def dropout_label(rates: Sequence[float]) -> Union[float, str]:
    rates = [float(r) for r in rates]
    if len(set(rates)) == 1:
        return rates[0]
    return "/".join(f"{r:g}" for r in rates)


def original_labels(split: OodSplit) -> np.ndarray:
    """Lookup table remapped label -> original label."""
    inverse = split.inverse_label_map
    return np.array([inverse[k] for k in range(len(inverse))], dtype=np.int64)


@contextlib.contextmanager
def _stage(label: int, method: str) -> Iterator[None]:
    try:
        yield
    except ExperimentError:
        raise
    except LatentUQError as exc:
        raise ExperimentError(label, method, exc) from exc


# =============================================================================
# Result types
# =============================================================================

@dataclass
class MethodRun:
    label: int
    method: str
    config: str
    alpha: Optional[float]
    beta: Optional[float]
    threshold: float
    metrics: Metrics
    scored: ScoredSet

    def row(self) -> Dict[str, Any]:
        m = self.metrics
        return {
            "label": self.label,
            "method": self.method,
            "config": self.config,
            "alpha": self.alpha,
            "beta": self.beta,
            "threshold": self.threshold,
            "tp": m.tp_rate,
            "tn": m.tn_rate,
            "tn_ood": m.tn_ood_rate,
            "well_classified": m.well_classified,
            "misclassified": m.misclassified,
            "ood": m.ood,
        }


@dataclass
class LabelRun:
    label: int
    split: Dict[str, Any]
    training: Dict[str, Any]
    methods: List[MethodRun] = field(default_factory=list)
    confidence_sets: Optional[Dict[str, Any]] = None
    audit: List[RuleResult] = field(default_factory=list)
    seconds: float = 0.0


@dataclass
class ExperimentResult:
    labels: List[LabelRun]
    summary: pd.DataFrame
    metadata: Dict[str, Any]

    @property
    def runs(self) -> List[MethodRun]:
        return [run for label_run in self.labels for run in label_run.methods]

    def cells(self) -> List[Tuple[str, str]]:
        """(method, config) pairs in first-seen order."""
        seen: Dict[Tuple[str, str], None] = {}
        for run in self.runs:
            seen.setdefault((run.method, run.config), None)
        return list(seen)

    def per_label_frame(self) -> pd.DataFrame:
        return pd.DataFrame([run.row() for run in self.runs])

    def pooled(self, method: str, config: str) -> ScoredSet:
        """Scored sets of one cell concatenated over held-out labels."""
        return ScoredSet.concat(r.scored for r in self.runs if r.method == method and r.config == config)


# =============================================================================
# One held-out label
# =============================================================================

def _score_rows(split: OodSplit, lut: np.ndarray, predicted: np.ndarray, confidence: np.ndarray) -> ScoredSet:
    n_in = len(split.test_in)
    true = np.concatenate([lut[split.test_in.labels], split.test_ood.labels])
    is_ood = np.arange(true.shape[0]) >= n_in
    return ScoredSet(true, lut[predicted], confidence, is_ood)


def run_label(cfg: RunConfig, label: int, workers: int = 1) -> LabelRun:
    """
    Full pipeline for one held-out label. `workers` parallelises the
    per-cell Gaussian fits and ensemble training inside this run.
    """
    started = time.perf_counter()
    train_all, test_all = load_datasets(cfg.data)

    with _stage(label, "split"):
        split = make_ood_split(train_all, test_all, label)
    with _stage(label, "train"):
        net, history = train_network(cfg, split.train)

    features = np.concatenate([split.test_in.features, split.test_ood.features])
    lut = original_labels(split)
    out = LabelRun(label=label, split=split.to_dict(), training=history.to_dict())

    inf = cfg.inference
    if inf.enabled:
        with _stage(label, "inference"):
            sets = build_confidence_sets(net, split.train)
            alpha0, beta0 = inf.percentiles[0]
            base = fit_uq_model(sets, alpha0, beta0, inf.ridge_scale, fingerprint(net), workers)
            base = base.with_options(layers=inf.layers or None, smoothstep=inf.smoothstep)
            latents, predicted = collect_latents(net, features)
            out.confidence_sets = sets.to_dict()

            for alpha, beta in inf.percentiles:
                model = base if (alpha, beta) == (alpha0, beta0) else refit_thresholds(base, sets, alpha, beta)
                tag = percentile_tag(alpha, beta)
                batch = score_latents(model, latents, predicted)
                context = {"label": label, "method": "inference", "config": tag}
                out.audit.extend(check_calibration(model, sets, context=context))
                out.audit.extend(check_product_bound(batch, model.active_layers, context=context))
                scored = _score_rows(split, lut, predicted, batch.confidence)
                out.methods.append(
                    MethodRun(label, "inference", tag, alpha, beta, inf.threshold, evaluate(scored, inf.threshold), scored)
                )

    mc = cfg.mc_dropout
    if mc.enabled:
        with _stage(label, "mc_dropout"):
            predicted, confidence = mc_dropout_batch(net, features, mc.passes, mc.seed)
            scored = _score_rows(split, lut, predicted, confidence)
            out.methods.append(
                MethodRun(label, "mc_dropout", f"T{mc.passes}", None, None, mc.threshold,
                          evaluate(scored, mc.threshold), scored)
            )

    ens = cfg.ensemble
    if ens.enabled:
        with _stage(label, "ensemble"):
            ensemble = train_ensemble(
                split.train.input_dim,
                network_specs(cfg),
                split.train.num_classes,
                split.train,
                training_params(cfg),
                members=ens.members,
                base_seed=ens.seed,
                workers=workers,
            )
            predicted, confidence = ensemble_batch(ensemble, features)
            scored = _score_rows(split, lut, predicted, confidence)
            out.methods.append(
                MethodRun(label, "ensemble", f"M{ens.members}", None, None, ens.threshold,
                          evaluate(scored, ens.threshold), scored)
            )

    out.seconds = time.perf_counter() - started
    logger.info("held-out label %d finished in %.1f s", label, out.seconds)
    return out


# =============================================================================
# Aggregation
# =============================================================================

def _mean_std(values: List[float]) -> Tuple[float, float]:
    if not values:
        return np.nan, np.nan
    arr = np.asarray(values, dtype=np.float64)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else np.nan
    return float(np.mean(arr)), std


def summarize(runs: Sequence[MethodRun], architecture: str, dropout: Union[float, str]) -> pd.DataFrame:
    """
    One row per (method, config): mean and sample std of every rate over
    the held-out labels where that rate is present.
    """
    cells: Dict[Tuple[str, str], List[MethodRun]] = {}
    for run in runs:
        cells.setdefault((run.method, run.config), []).append(run)

    rows = []
    for (method, _config), group in cells.items():
        first = group[0]
        row: Dict[str, Any] = {
            "method": method,
            "architecture": architecture,
            "dropout": dropout,
            "alpha": first.alpha if first.alpha is not None else np.nan,
            "beta": first.beta if first.beta is not None else np.nan,
            "threshold": first.threshold,
        }
        for prefix, attr in RATES:
            values = [getattr(r.metrics, attr) for r in group if getattr(r.metrics, attr) is not None]
            row[f"{prefix}_mean"], row[f"{prefix}_std"] = _mean_std(values)
        rows.append(row)
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


# =============================================================================
# Driver
# =============================================================================

def held_out_labels(cfg: RunConfig) -> List[int]:
    if cfg.run.held_out_labels:
        return list(cfg.run.held_out_labels)
    train_set, _ = load_datasets(cfg.data)
    return list(range(train_set.num_classes))


def run_experiment(cfg: RunConfig, progress: bool = False) -> ExperimentResult:
    """
    Run every held-out label and aggregate.

    Raises
    ------
    ExperimentError : a stage failed; carries the label and method.
    """
    started = time.perf_counter()
    labels = held_out_labels(cfg)
    workers = cfg.run.workers
    label_parallel = workers > 1 and len(labels) > 1
    logger.info(
        "experiment: %s, labels %s, methods %s, %d worker(s)",
        architecture_label(cfg.network.hidden), labels, cfg.methods, workers,
    )

    bar_args = dict(total=len(labels), desc="labels", unit="label", file=sys.stderr, disable=not progress)
    if label_parallel:
        with ProcessPoolExecutor(max_workers=min(workers, len(labels))) as pool:
            jobs = pool.map(run_label, [cfg] * len(labels), labels, [1] * len(labels))
            label_runs = list(tqdm(jobs, **bar_args))
    else:
        label_runs = [run_label(cfg, label, workers) for label in tqdm(labels, **bar_args)]

    architecture = architecture_label(cfg.network.hidden)
    dropout = dropout_label(cfg.network.dropout_rates())
    summary = summarize([r for lr in label_runs for r in lr.methods], architecture, dropout)

    metadata = {
        "architecture": architecture,
        "hidden": list(cfg.network.hidden),
        "dropout": list(cfg.network.dropout_rates()),
        "percentiles": [list(p) for p in cfg.inference.percentiles] if cfg.inference.enabled else [],
        "thresholds": {
            "inference": cfg.inference.threshold,
            "mc_dropout": cfg.mc_dropout.threshold,
            "ensemble": cfg.ensemble.threshold,
        },
        "methods": cfg.methods,
        "seeds": {
            "data": cfg.data.seed,
            "network": cfg.network.seed,
            "training": cfg.training.seed,
            "mc_dropout": cfg.mc_dropout.seed,
            "ensemble": cfg.ensemble.seed,
        },
        "held_out_labels": labels,
        "per_label": [
            {
                "label": lr.label,
                "split": lr.split,
                "training": lr.training,
                "confidence_sets": lr.confidence_sets,
                "seconds": round(lr.seconds, 3),
            }
            for lr in label_runs
        ],
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
    }
    return ExperimentResult(labels=label_runs, summary=summary, metadata=metadata)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serialisable: {type(value).__name__}")


def write_experiment(result: ExperimentResult, cfg: RunConfig, out_dir: Union[str, Path]) -> Path:
    """
    Write under out_dir:

    results.csv, per_label.csv, metadata.json, config.toml, audit.csv,
    and per (method, config) cell histogram_<cell>.csv, sweep_<cell>.csv
    and scores_<cell>.csv (pooled over held-out labels).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    result.summary.to_csv(out / "results.csv", index=False)
    result.per_label_frame().to_csv(out / "per_label.csv", index=False)
    (out / "metadata.json").write_text(json.dumps(result.metadata, indent=2, default=_json_default))
    (out / "config.toml").write_text(render_config(absolute_data_paths(cfg)))

    thresholds = sweep_thresholds(cfg.run.sweep_points)
    for method, config in result.cells():
        pooled = result.pooled(method, config)
        cell = f"{method}_{config}"
        write_histogram(export_histogram(pooled, cfg.run.histogram_bins), out / f"histogram_{cell}.csv")
        threshold_sweep(pooled, thresholds).to_csv(out / f"sweep_{cell}.csv", index=False)
        write_scores(pooled, out / f"scores_{cell}.csv")

    audit = run_all_rules(result, sweep_points=cfg.run.sweep_points)
    results_frame(audit).to_csv(out / "audit.csv", index=False)
    flagged = [r for r in audit if r.level in ("ERROR", "WARNING")]
    for r in flagged:
        logger.warning("audit %s %s: %s", r.level, r.code, r.message)
    logger.info("wrote experiment results to %s (%d audit findings)", out, len(flagged))
    return out
