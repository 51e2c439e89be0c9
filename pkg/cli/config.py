from __future__ import annotations

"""
Experiment configuration.

One TOML document per experiment:

    [data]        source = "idx" (train/test image + label paths) or "blobs"
    [network]     hidden widths, dropout, activation, seed
    [training]    batch size, learning rate, epochs, early-stop accuracy, seed
    [inference]   percentile pairs, acceptance threshold, ridge, layers
    [mc_dropout]  passes, threshold, seed
    [ensemble]    members, threshold, seed
    [run]         held-out labels, worker count, histogram bins

Every stochastic component takes its seed from the document; a missing seed
is a ValidationError, never a random default. Unknown sections and keys are
rejected. `render_config` writes a document that parses back to an equal
RunConfig.
"""

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from core.errors import BadPercentiles, ParseError, ValidationError
from knowledge.presets import (
    DEFAULT_THRESHOLDS,
    EARLY_STOP_ACCURACY,
    ENSEMBLE_MEMBERS,
    MC_DROPOUT_PASSES,
    resolve_percentiles,
)


# =============================================================================
# Sections
# =============================================================================

@dataclass(frozen=True)
class DataConfig:
    source: str = "idx"
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    num_classes: Optional[int] = None
    # blobs
    classes: int = 10
    dim: int = 20
    train_per_class: int = 200
    test_per_class: int = 100
    separation: float = 10.0
    seed: Optional[int] = None


@dataclass(frozen=True)
class NetworkConfig:
    hidden: Tuple[int, ...] = ()
    dropout: Tuple[float, ...] = (0.0,)
    activation: str = "relu"
    seed: Optional[int] = None

    def dropout_rates(self) -> Tuple[float, ...]:
        """One rate per hidden layer (a single value is broadcast)."""
        if len(self.dropout) == 1:
            return self.dropout * len(self.hidden)
        return self.dropout


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 128
    learning_rate: float = 1e-3
    max_epochs: int = 50
    early_stop_accuracy: float = EARLY_STOP_ACCURACY
    seed: Optional[int] = None


@dataclass(frozen=True)
class InferenceConfig:
    enabled: bool = True
    percentiles: Tuple[Tuple[float, float], ...] = ()
    threshold: float = DEFAULT_THRESHOLDS["inference"]
    ridge_scale: float = 1e-6
    layers: Tuple[int, ...] = ()
    smoothstep: str = "corrected"


@dataclass(frozen=True)
class McDropoutConfig:
    enabled: bool = False
    passes: int = MC_DROPOUT_PASSES
    threshold: float = DEFAULT_THRESHOLDS["mc_dropout"]
    seed: Optional[int] = None


@dataclass(frozen=True)
class EnsembleConfig:
    enabled: bool = False
    members: int = ENSEMBLE_MEMBERS
    threshold: float = DEFAULT_THRESHOLDS["ensemble"]
    seed: Optional[int] = None


@dataclass(frozen=True)
class RunSection:
    held_out_labels: Tuple[int, ...] = ()
    workers: int = 1
    histogram_bins: int = 20
    sweep_points: int = 101


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig
    network: NetworkConfig
    training: TrainingConfig
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    mc_dropout: McDropoutConfig = field(default_factory=McDropoutConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    run: RunSection = field(default_factory=RunSection)

    @property
    def methods(self) -> List[str]:
        out = []
        if self.inference.enabled:
            out.append("inference")
        if self.mc_dropout.enabled:
            out.append("mc_dropout")
        if self.ensemble.enabled:
            out.append("ensemble")
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: _section_dict(getattr(self, f.name)) for f in fields(self)}


SECTIONS = {
    "data": DataConfig,
    "network": NetworkConfig,
    "training": TrainingConfig,
    "inference": InferenceConfig,
    "mc_dropout": McDropoutConfig,
    "ensemble": EnsembleConfig,
    "run": RunSection,
}
REQUIRED_SECTIONS = ("data", "network", "training")
IDX_PATH_KEYS = ("train_images", "train_labels", "test_images", "test_labels")

# Field kinds used for coercion and rendering.
_INT, _FLOAT, _STR, _BOOL = "int", "float", "str", "bool"
_INTS, _FLOATS, _PAIRS = "ints", "floats", "pairs"
_OPT_INT = "opt_int"

_KINDS: Dict[str, Dict[str, str]] = {
    "data": {
        "source": _STR, "train_images": _STR, "train_labels": _STR, "test_images": _STR,
        "test_labels": _STR, "num_classes": _OPT_INT, "classes": _INT, "dim": _INT,
        "train_per_class": _INT, "test_per_class": _INT, "separation": _FLOAT, "seed": _OPT_INT,
    },
    "network": {"hidden": _INTS, "dropout": _FLOATS, "activation": _STR, "seed": _OPT_INT},
    "training": {
        "batch_size": _INT, "learning_rate": _FLOAT, "max_epochs": _INT,
        "early_stop_accuracy": _FLOAT, "seed": _OPT_INT,
    },
    "inference": {
        "enabled": _BOOL, "percentiles": _PAIRS, "threshold": _FLOAT, "ridge_scale": _FLOAT,
        "layers": _INTS, "smoothstep": _STR,
    },
    "mc_dropout": {"enabled": _BOOL, "passes": _INT, "threshold": _FLOAT, "seed": _OPT_INT},
    "ensemble": {"enabled": _BOOL, "members": _INT, "threshold": _FLOAT, "seed": _OPT_INT},
    "run": {"held_out_labels": _INTS, "workers": _INT, "histogram_bins": _INT, "sweep_points": _INT},
}


def _section_dict(section) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for f in fields(section):
        value = getattr(section, f.name)
        if isinstance(value, tuple):
            value = [list(v) if isinstance(v, tuple) else v for v in value]
        out[f.name] = value
    return out


# =============================================================================
# Coercion
# =============================================================================

def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v: Any) -> bool:
    return (_is_int(v) or isinstance(v, float)) and math.isfinite(float(v))


def _coerce(key: str, kind: str, value: Any) -> Any:
    if kind == _INT:
        if not _is_int(value):
            raise ValidationError(key, f"expected an integer, got {value!r}")
        return int(value)
    if kind == _OPT_INT:
        return _coerce(key, _INT, value)
    if kind == _FLOAT:
        if not _is_number(value):
            raise ValidationError(key, f"expected a number, got {value!r}")
        return float(value)
    if kind == _STR:
        if not isinstance(value, str):
            raise ValidationError(key, f"expected a string, got {value!r}")
        return value
    if kind == _BOOL:
        if not isinstance(value, bool):
            raise ValidationError(key, f"expected true or false, got {value!r}")
        return value
    if kind == _INTS:
        values = value if isinstance(value, list) else [value]
        return tuple(_coerce(key, _INT, v) for v in values)
    if kind == _FLOATS:
        values = value if isinstance(value, list) else [value]
        return tuple(_coerce(key, _FLOAT, v) for v in values)
    if kind == _PAIRS:
        if not isinstance(value, list):
            raise ValidationError(key, "expected a list of preset names or [alpha, beta] pairs")
        pairs = []
        for item in value:
            if not isinstance(item, (str, list)):
                raise ValidationError(key, f"expected a preset name or [alpha, beta], got {item!r}")
            if isinstance(item, list) and not all(_is_number(v) for v in item):
                raise ValidationError(key, f"percentile pair {item!r} must hold numbers")
            try:
                pairs.append(resolve_percentiles(item))
            except BadPercentiles as exc:
                raise ValidationError(key, str(exc)) from exc
        return tuple(pairs)
    raise ValidationError(key, f"unsupported field kind {kind}")


def _build_section(name: str, raw: Dict[str, Any]) -> Any:
    if not isinstance(raw, dict):
        raise ValidationError(name, "expected a table")
    kinds = dict(_KINDS[name])
    values: Dict[str, Any] = {}
    raw = dict(raw)

    if name == "inference":
        alpha = raw.pop("alpha", None)
        beta = raw.pop("beta", None)
        if (alpha is None) != (beta is None):
            missing = "beta" if beta is None else "alpha"
            raise ValidationError(f"inference.{missing}", "alpha and beta must be given together")
        if alpha is not None:
            if "percentiles" in raw:
                raise ValidationError("inference.percentiles", "give either alpha/beta or percentiles")
            a = _coerce("inference.alpha", _FLOAT, alpha)
            b = _coerce("inference.beta", _FLOAT, beta)
            if not 0.0 <= a <= 100.0:
                raise ValidationError("inference.alpha", f"must lie in [0, 100], got {a}")
            if not a <= b <= 100.0:
                raise ValidationError("inference.beta", f"must lie in [alpha, 100] = [{a}, 100], got {b}")
            values["percentiles"] = ((a, b),)

    for key, value in raw.items():
        if key not in kinds:
            raise ValidationError(f"{name}.{key}", "unknown key")
        values[key] = _coerce(f"{name}.{key}", kinds[key], value)
    return SECTIONS[name](**values)


# =============================================================================
# Validation
# =============================================================================

def _require(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ValidationError(key, message)


def validate_config(cfg: RunConfig) -> RunConfig:
    d = cfg.data
    _require(d.source in ("idx", "blobs"), "data.source", f"must be 'idx' or 'blobs', got {d.source!r}")
    if d.source == "idx":
        for key in IDX_PATH_KEYS:
            _require(bool(getattr(d, key)), f"data.{key}", "required for idx data")
        _require(d.num_classes is None or d.num_classes >= 2, "data.num_classes", "must be >= 2")
    else:
        _require(d.seed is not None, "data.seed", "blobs data needs a seed")
        _require(d.classes >= 2, "data.classes", "must be >= 2")
        _require(d.dim >= 1, "data.dim", "must be >= 1")
        _require(d.train_per_class >= 1, "data.train_per_class", "must be >= 1")
        _require(d.test_per_class >= 1, "data.test_per_class", "must be >= 1")
        _require(d.separation >= 0, "data.separation", "must be >= 0")

    n = cfg.network
    _require(len(n.hidden) >= 1, "network.hidden", "at least one hidden layer is required")
    _require(all(w >= 1 for w in n.hidden), "network.hidden", "widths must be >= 1")
    _require(len(n.dropout) in (1, len(n.hidden)), "network.dropout", "give one rate or one per hidden layer")
    _require(all(0.0 <= r < 1.0 for r in n.dropout), "network.dropout", "rates must lie in [0, 1)")
    _require(n.activation in ("relu", "identity"), "network.activation", "must be 'relu' or 'identity'")
    _require(n.seed is not None, "network.seed", "a seed is required")

    t = cfg.training
    _require(t.batch_size >= 1, "training.batch_size", "must be >= 1")
    _require(t.learning_rate > 0, "training.learning_rate", "must be > 0")
    _require(t.max_epochs >= 0, "training.max_epochs", "must be >= 0")
    _require(0.0 <= t.early_stop_accuracy <= 1.0, "training.early_stop_accuracy", "must lie in [0, 1]")
    _require(t.seed is not None, "training.seed", "a seed is required")

    i = cfg.inference
    if i.enabled:
        _require(len(i.percentiles) >= 1, "inference.percentiles", "at least one percentile pair is required")
    for alpha, beta in i.percentiles:
        _require(0.0 <= alpha <= beta <= 100.0, "inference.beta", f"need 0 <= alpha <= beta <= 100, got ({alpha}, {beta})")
    _require(0.0 <= i.threshold <= 1.0, "inference.threshold", "must lie in [0, 1]")
    _require(i.ridge_scale >= 0.0, "inference.ridge_scale", "must be >= 0")
    _require(all(1 <= l <= len(n.hidden) for l in i.layers), "inference.layers", f"must lie in 1..{len(n.hidden)}")
    _require(i.smoothstep in ("corrected", "literal"), "inference.smoothstep", "must be 'corrected' or 'literal'")

    m = cfg.mc_dropout
    _require(m.passes >= 1, "mc_dropout.passes", "must be >= 1")
    _require(0.0 <= m.threshold <= 1.0, "mc_dropout.threshold", "must lie in [0, 1]")
    if m.enabled:
        _require(m.seed is not None, "mc_dropout.seed", "a seed is required")

    e = cfg.ensemble
    _require(e.members >= 2, "ensemble.members", "must be >= 2")
    _require(0.0 <= e.threshold <= 1.0, "ensemble.threshold", "must lie in [0, 1]")
    if e.enabled:
        _require(e.seed is not None, "ensemble.seed", "a seed is required")

    r = cfg.run
    _require(r.workers >= 1, "run.workers", "must be >= 1")
    _require(r.histogram_bins >= 1, "run.histogram_bins", "must be >= 1")
    _require(r.sweep_points >= 2, "run.sweep_points", "must be >= 2")
    _require(all(l >= 0 for l in r.held_out_labels), "run.held_out_labels", "labels must be >= 0")
    _require(bool(cfg.methods), "run", "enable at least one of inference, mc_dropout, ensemble")
    return cfg


# =============================================================================
# Parse / render
# =============================================================================

def absolute_data_paths(cfg: RunConfig, base_dir: Optional[Union[str, Path]] = None) -> RunConfig:
    """Copy of cfg whose relative [data] paths are made absolute against base_dir (default: cwd)."""
    if cfg.data.source != "idx":
        return cfg
    base = Path.cwd() if base_dir is None else Path(base_dir)
    resolved = {
        key: str((base / getattr(cfg.data, key)).absolute())
        for key in IDX_PATH_KEYS
        if getattr(cfg.data, key) and not Path(getattr(cfg.data, key)).is_absolute()
    }
    return replace(cfg, data=replace(cfg.data, **resolved))


def parse_config(source: str, base_dir: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Parse and validate a TOML document. Relative [data] paths are resolved
    against base_dir when given.

    Raises
    ------
    ParseError      : not valid TOML.
    ValidationError : unknown section/key, wrong type or invalid value;
                      the message names the offending key.
    """
    try:
        doc = tomllib.loads(source)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"invalid config document: {exc}") from exc

    for name in doc:
        if name not in SECTIONS:
            raise ValidationError(name, "unknown section")
    for name in REQUIRED_SECTIONS:
        if name not in doc:
            raise ValidationError(name, "section is required")

    sections = {name: _build_section(name, doc[name]) for name in doc}
    cfg = RunConfig(**sections)

    if base_dir is not None:
        cfg = absolute_data_paths(cfg, base_dir)
    return validate_config(cfg)


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def _render_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_render_value(v) for v in value) + "]"
    raise TypeError(f"cannot render {value!r}")


def render_config(cfg: RunConfig) -> str:
    """TOML document that parses back to cfg (optional unset values are omitted)."""
    lines: List[str] = []
    for name in SECTIONS:
        section = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in fields(section):
            value = getattr(section, f.name)
            if value is None:
                continue
            lines.append(f"{f.name} = {_render_value(value)}")
        lines.append("")
    return "\n".join(lines)
