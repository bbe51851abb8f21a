"""Experiment configuration: TOML files plus CLI overrides.

Every run is described declaratively; dense, gradual and hard runs of a
comparison share one config and differ only in the pruning section, so
the paired-run harness can guarantee that everything else is identical.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .pruning import PruneHyperParams


@dataclass(frozen=True)
class TaskConfig:
    variant: str = "adding"
    seq_len: int = 36


@dataclass(frozen=True)
class ModelConfig:
    cell: str = "rnn"
    hidden_size: int = 128
    depth: int = 1
    activation: str = "tanh"


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.002
    momentum: float = 0.9
    clip_norm: float = 5.0


@dataclass(frozen=True)
class HardPruneConfig:
    prune_epoch: int = 5
    target_sparsity: float = 0.9
    target_remaining: int = 0  # 0 means "use target_sparsity"


@dataclass(frozen=True)
class PruningConfig:
    mode: str = "none"            # none | gradual | hard
    percentile: float = 0.9
    ramp_factor: float = 1.5
    freq: int = 100
    calibration_epochs: int = 1
    calibration: str = ""         # path to a calibration file, "" = out_dir default
    # Explicit schedule overrides per layer type (None = use calibration).
    recurrent: PruneHyperParams | None = None
    linear: PruneHyperParams | None = None
    hard: HardPruneConfig = field(default_factory=HardPruneConfig)


@dataclass(frozen=True)
class BenchConfig:
    sizes: tuple = (1760,)
    sparsities: tuple = (0.0, 0.9, 0.95, 0.98)
    layer_type: str = "RNN"
    reps: int = 30
    warmup: int = 5
    parallel: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    pruning: PruningConfig = field(default_factory=PruningConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    epochs: int = 20
    iters_per_epoch: int = 500
    batch_size: int = 8
    val_batches: int = 20
    seed: int = 0
    out_dir: str = "runs/out"

    @property
    def total_iters(self):
        return self.epochs * self.iters_per_epoch

    def with_pruning(self, **changes):
        """Copy of this config differing only in pruning settings."""
        return dataclasses.replace(
            self, pruning=dataclasses.replace(self.pruning, **changes)
        )


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def validate_config(cfg):
    """Reject invalid configs with a message naming the offending field."""
    t, m, o, p = cfg.task, cfg.model, cfg.optimizer, cfg.pruning
    _require(t.variant in ("adding", "char-lm"),
             f"task.variant must be 'adding' or 'char-lm', got {t.variant!r}")
    _require(t.seq_len >= 2, f"task.seq_len must be >= 2, got {t.seq_len}")
    _require(m.cell in ("rnn", "gru"), f"model.cell must be 'rnn' or 'gru', got {m.cell!r}")
    _require(m.hidden_size >= 1, f"model.hidden_size must be >= 1, got {m.hidden_size}")
    _require(m.depth >= 1, f"model.depth must be >= 1, got {m.depth}")
    _require(m.activation in ("tanh", "clipped_relu"),
             f"model.activation must be 'tanh' or 'clipped_relu', got {m.activation!r}")
    _require(o.learning_rate >= 0, f"optimizer.learning_rate must be >= 0, got {o.learning_rate}")
    _require(0 <= o.momentum < 1, f"optimizer.momentum must be in [0, 1), got {o.momentum}")
    _require(o.clip_norm >= 0, f"optimizer.clip_norm must be >= 0, got {o.clip_norm}")
    _require(cfg.epochs >= 1, f"epochs must be >= 1, got {cfg.epochs}")
    _require(cfg.iters_per_epoch >= 1, f"iters_per_epoch must be >= 1, got {cfg.iters_per_epoch}")
    _require(cfg.batch_size >= 1, f"batch_size must be >= 1, got {cfg.batch_size}")
    _require(cfg.val_batches >= 1, f"val_batches must be >= 1, got {cfg.val_batches}")
    _require(cfg.seed >= 0, f"seed must be >= 0, got {cfg.seed}")
    _require(p.mode in ("none", "gradual", "hard"),
             f"pruning.mode must be 'none', 'gradual' or 'hard', got {p.mode!r}")
    _require(0 < p.percentile <= 1, f"pruning.percentile must be in (0, 1], got {p.percentile}")
    _require(1.5 <= p.ramp_factor <= 2.0,
             f"pruning.ramp_factor must be in [1.5, 2.0], got {p.ramp_factor}")
    _require(p.freq >= 1, f"pruning.freq must be >= 1, got {p.freq}")
    _require(p.calibration_epochs >= 1,
             f"pruning.calibration_epochs must be >= 1, got {p.calibration_epochs}")
    if p.mode == "hard":
        _require(0 <= p.hard.prune_epoch < cfg.epochs,
                 f"pruning.hard.prune_epoch must be in [0, {cfg.epochs}), got {p.hard.prune_epoch}")
        _require(0 < p.hard.target_sparsity < 1 or p.hard.target_remaining > 0,
                 "pruning.hard needs target_sparsity in (0, 1) or a positive target_remaining")
    return cfg


_SECTIONS = {
    "task": TaskConfig,
    "model": ModelConfig,
    "optimizer": OptimizerConfig,
    "bench": BenchConfig,
}


def _build_section(cls, data, path):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown key {path}.{key}")
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad section [{path}]: {exc}") from exc


def _build_hyperparams(data, path):
    required = ("start_itr", "ramp_itr", "end_itr", "start_slope", "ramp_slope", "freq")
    missing = [k for k in required if k not in data]
    if missing:
        raise ConfigError(f"[{path}] missing keys: {', '.join(missing)}")
    extra = [k for k in data if k not in required]
    if extra:
        raise ConfigError(f"unknown key {path}.{extra[0]}")
    try:
        return PruneHyperParams(**data)
    except ValueError as exc:
        raise ConfigError(f"bad section [{path}]: {exc}") from exc


def _build_pruning(data):
    data = dict(data)
    kwargs = {}
    for layer_type in ("recurrent", "linear"):
        if layer_type in data:
            kwargs[layer_type] = _build_hyperparams(data.pop(layer_type), f"pruning.{layer_type}")
    if "hard" in data:
        kwargs["hard"] = _build_section(HardPruneConfig, data.pop("hard"), "pruning.hard")
    simple = {f.name for f in dataclasses.fields(PruningConfig)} - {"recurrent", "linear", "hard"}
    for key, value in data.items():
        if key not in simple:
            raise ConfigError(f"unknown key pruning.{key}")
        kwargs[key] = value
    return PruningConfig(**kwargs)


def config_from_dict(data, overrides=None):
    """Build and validate an ExperimentConfig from nested dicts."""
    data = dict(data)
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = _build_section(cls, data.pop(name), name)
    if "pruning" in data:
        kwargs["pruning"] = _build_pruning(data.pop("pruning"))
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for key, value in data.items():
        if key not in top:
            raise ConfigError(f"unknown key {key}")
        kwargs[key] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            kwargs[key] = value
    try:
        cfg = ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return validate_config(cfg)


def load_config(path, overrides=None):
    """Parse a TOML config file; CLI overrides take precedence."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return config_from_dict(data, overrides)
