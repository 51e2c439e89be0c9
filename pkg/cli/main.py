from __future__ import annotations

"""
Command-line driver.

    python -m cli train       --config F --out DIR [--label L]
    python -m cli fit-uq      --model M --config F --out DIR [--label L]
    python -m cli score       --model M --uq U --input IMAGES [--labels LABELS] [--split JSON] --out CSV
    python -m cli evaluate    --scores CSV --threshold A [--sweep N] [--out CSV]
    python -m cli experiment  --config F --out DIR [--workers N]
    python -m cli histogram   --scores CSV --bins N --out CSV

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
Progress and log messages go to standard error; results go to files.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from cli.config import RunConfig, load_config
from core.errors import BadFormat, ConfigError, DimensionMismatch, LatentUQError, ValidationError
from core.models import Dataset
from data.idx_loader import read_idx_images, read_idx_labels, write_idx_dataset
from data.ood_split import make_ood_split
from engines.latent_engine import build_confidence_sets, fit_uq_model, refit_thresholds, score_batch
from engines.model_io import fingerprint, load_network, save_network
from engines.uq_io import load_uq_model, save_uq_model
from evaluation.experiment import (
    load_datasets,
    percentile_tag,
    run_experiment,
    train_network,
    write_experiment,
)
from evaluation.histogram import export_histogram, write_histogram
from evaluation.metrics import (
    UNKNOWN_LABEL,
    ScoredSet,
    evaluate,
    metrics_frame,
    read_scores,
    sweep_thresholds,
    threshold_sweep,
    write_scores,
)
from rules.rules_calibration import check_calibration

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

MODEL_FILE = "model.lcn"
SPLIT_FILE = "split.json"
TEST_IMAGES = "test-images.idx"
TEST_LABELS = "test-labels.idx"
MNIST_SIDE = 28


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors instead of exiting."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(message)


def configure_logging(verbosity: int = 0) -> None:
    """Single stderr handler: -v DEBUG, default INFO, -q WARNING."""
    level = logging.DEBUG if verbosity > 0 else logging.WARNING if verbosity < 0 else logging.INFO
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_latent_uq", False):
            root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    handler._latent_uq = True  # type: ignore[attr-defined]
    root.addHandler(handler)
    root.setLevel(level)


# =============================================================================
# Helpers
# =============================================================================

def _image_shape(input_dim: int) -> Tuple[int, int]:
    if input_dim == MNIST_SIDE * MNIST_SIDE:
        return MNIST_SIDE, MNIST_SIDE
    return 1, input_dim


def _held_out(cfg: RunConfig, override: Optional[int]) -> Optional[int]:
    if override is not None:
        return override
    return cfg.run.held_out_labels[0] if cfg.run.held_out_labels else None


def _training_data(cfg: RunConfig, label: Optional[int]) -> Tuple[Dataset, Dataset, Dict]:
    """Training set (held-out label removed when given), full test set, split description."""
    train_all, test_all = load_datasets(cfg.data)
    if label is None:
        identity = {k: k for k in range(train_all.num_classes)}
        split_doc = {"held_out_label": None, "num_classes": train_all.num_classes,
                     "label_map": {str(k): v for k, v in identity.items()}}
        return train_all, test_all, split_doc
    split = make_ood_split(train_all, test_all, label)
    split_doc = {"held_out_label": label, "num_classes": train_all.num_classes,
                 "label_map": {str(k): v for k, v in split.label_map.items()}}
    return split.train, test_all, split_doc


def _check_unit(key: str, value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValidationError(key, f"must lie in [0, 1], got {value}")
    return value


def _check_at_least(key: str, value: int, low: int) -> int:
    if value < low:
        raise ValidationError(key, f"must be >= {low}, got {value}")
    return value


def _read_split(path: Optional[str]) -> Tuple[Optional[np.ndarray], Optional[int]]:
    """(remapped -> original lookup, held-out label) from a split document."""
    if path is None:
        return None, None
    try:
        doc = json.loads(Path(path).read_text())
        label_map = {int(k): int(v) for k, v in doc["label_map"].items()}
        lut = np.zeros(len(label_map), dtype=np.int64)
        for orig, new in label_map.items():
            lut[new] = orig
        held = doc.get("held_out_label")
        held = None if held is None else int(held)
    except (ValueError, KeyError, TypeError, AttributeError, IndexError) as exc:
        raise BadFormat(f"{path}: not a split document ({exc!r})") from exc
    return lut, held


# =============================================================================
# Subcommands
# =============================================================================

def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    train_set, test_set, split_doc = _training_data(cfg, _held_out(cfg, args.label))
    net, history = train_network(cfg, train_set, progress=True)

    save_network(net, out / MODEL_FILE)
    history.to_frame().to_csv(out / "history.csv", index=False)
    (out / SPLIT_FILE).write_text(json.dumps(split_doc, indent=2))
    rows, cols = _image_shape(test_set.input_dim)
    write_idx_dataset(test_set, out / TEST_IMAGES, out / TEST_LABELS, rows, cols)
    logger.info("trained %s (%s) -> %s", net.describe(), fingerprint(net)[:12], out / MODEL_FILE)
    return EXIT_OK


def cmd_fit_uq(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    net = load_network(args.model)
    train_set, _, _ = _training_data(cfg, _held_out(cfg, args.label))
    inf = cfg.inference
    if not inf.percentiles:
        raise ConfigError("inference.percentiles: at least one percentile pair is required for fit-uq")

    sets = build_confidence_sets(net, train_set)
    alpha0, beta0 = inf.percentiles[0]
    base = fit_uq_model(sets, alpha0, beta0, inf.ridge_scale, fingerprint(net), cfg.run.workers)
    base = base.with_options(layers=inf.layers or None, smoothstep=inf.smoothstep)

    for alpha, beta in inf.percentiles:
        model = base if (alpha, beta) == (alpha0, beta0) else refit_thresholds(base, sets, alpha, beta)
        tag = percentile_tag(alpha, beta)
        save_uq_model(model, out / f"uq_{tag}.luq")
        model.thresholds_frame().to_csv(out / f"thresholds_{tag}.csv", index=False)
        for finding in check_calibration(model, sets, context={"config": tag}):
            log = logger.info if finding.level == "INFO" else logger.warning
            log("%s %s: %s", finding.code, tag, finding.message)
    logger.info("wrote %d UQ model(s) to %s", len(inf.percentiles), out)
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    net = load_network(args.model)
    model = load_uq_model(args.uq)
    features = read_idx_images(args.input)
    if features.shape[1] != net.input_dim:
        raise DimensionMismatch(f"{args.input}: {features.shape[1]} features, network expects {net.input_dim}")

    batch = score_batch(model, net, features)
    lut, held = _read_split(args.split)
    if lut is not None and lut.shape[0] != net.num_classes:
        raise DimensionMismatch(f"{args.split} maps {lut.shape[0]} labels, network has {net.num_classes} outputs")
    predicted = batch.predicted if lut is None else lut[batch.predicted]

    if args.labels is not None:
        true = read_idx_labels(args.labels)
        if true.shape[0] != features.shape[0]:
            raise DimensionMismatch(f"{args.labels} holds {true.shape[0]} labels for {features.shape[0]} images")
    else:
        true = np.full(features.shape[0], UNKNOWN_LABEL, dtype=np.int64)
    is_ood = (true == held) if held is not None else np.zeros(true.shape[0], dtype=bool)

    path = write_scores(ScoredSet(true, predicted, batch.confidence, is_ood), args.out)
    logger.info("scored %d inputs (%d OOD) -> %s", true.shape[0], int(is_ood.sum()), path)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    _check_unit("--threshold", args.threshold)
    if args.sweep:
        _check_at_least("--sweep", args.sweep, 2)
    scores = Path(args.scores)
    scored = read_scores(scores)
    metrics = evaluate(scored, args.threshold)

    out = Path(args.out) if args.out else scores.with_name(f"{scores.stem}_metrics.csv")
    metrics_frame(metrics).to_csv(out, index=False)
    logger.info(
        "a=%.3f TP=%s TN=%s TN-OOD=%s -> %s",
        metrics.threshold, metrics.tp_rate, metrics.tn_rate, metrics.tn_ood_rate, out,
    )
    if args.sweep:
        sweep_path = out.with_name(f"{scores.stem}_sweep.csv")
        threshold_sweep(scored, sweep_thresholds(args.sweep)).to_csv(sweep_path, index=False)
        logger.info("threshold sweep (%d points) -> %s", args.sweep, sweep_path)
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.workers is not None:
        cfg = replace(cfg, run=replace(cfg.run, workers=args.workers))
    result = run_experiment(cfg, progress=True)
    write_experiment(result, cfg, args.out)
    return EXIT_OK


def cmd_histogram(args: argparse.Namespace) -> int:
    _check_at_least("--bins", args.bins, 1)
    scored = read_scores(args.scores)
    path = write_histogram(export_histogram(scored, args.bins), args.out)
    logger.info("histogram (%d bins) -> %s", args.bins, path)
    return EXIT_OK


# =============================================================================
# Parser
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="latent-uq", description="Latent-space prediction confidence for MLP classifiers.")
    noise = parser.add_mutually_exclusive_group()
    noise.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    noise.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("train", help="train a classifier")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label", type=int, default=None, help="held-out label (default: first in [run])")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fit-uq", help="fit latent Gaussians and thresholds")
    p.add_argument("--model", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label", type=int, default=None)
    p.set_defaults(func=cmd_fit_uq)

    p = sub.add_parser("score", help="score IDX images")
    p.add_argument("--model", required=True)
    p.add_argument("--uq", required=True)
    p.add_argument("--input", required=True, help="IDX image file")
    p.add_argument("--labels", default=None, help="IDX label file with the true labels")
    p.add_argument("--split", default=None, help="split.json written by train")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="TP / TN / TN-OOD of a scored set")
    p.add_argument("--scores", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--sweep", type=int, default=0, help="also write a sweep over N thresholds")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="leave-one-label-out experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("histogram", help="confidence histogram of a scored set")
    p.add_argument("--scores", required=True)
    p.add_argument("--bins", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_histogram)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(sys.argv[1:] if argv is None else argv))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG

    configure_logging(1 if args.verbose else -1 if args.quiet else 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LatentUQError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
