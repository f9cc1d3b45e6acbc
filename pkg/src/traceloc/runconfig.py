"""Declarative run configuration.

A run is fully determined by one JSON config (nested key/value sections) plus
the code version. Parsing is strict: unknown keys are rejected with their
full path, so sweep automation cannot silently misspell a field. Four
independent seeds keep the field, data, model, and evaluation streams
separate, letting ablations share data while varying models.
"""

import dataclasses
import json
import typing
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from traceloc.dataset import NoiseConfig
from traceloc.exceptions import ConfigError
from traceloc.field import PathLossParams
from traceloc.losses import AblationConfig
from traceloc.models import ModelConfig
from traceloc.training import StageSchedule


@dataclass(frozen=True)
class RadioMapConfig:
    n_anchors: int = 337
    samples_per_anchor: int = 50
    length_scale_m: float = 3.0
    signal_var: float = 25.0
    noise_var: float | None = None  # None: anchor-mean variance of the shadowing

    def __post_init__(self):
        if self.n_anchors < 2 or self.samples_per_anchor < 1:
            raise ConfigError("radiomap needs >= 2 anchors and >= 1 sample per anchor")


@dataclass(frozen=True)
class WalkBankConfig:
    count: int = 512
    length: int = 64


@dataclass(frozen=True)
class DataConfig:
    size: int = 40_000
    m: int = 9
    train_ratio: float = 0.8
    expected_hash: str | None = None

    def __post_init__(self):
        if self.size < 1 or self.m < 2:
            raise ConfigError("data.size must be >= 1 and data.m >= 2")
        if not 0.0 < self.train_ratio < 1.0:
            raise ConfigError("data.train_ratio must lie strictly between 0 and 1")


@dataclass(frozen=True)
class MetricsConfig:
    n_pairs: int = 10_000
    lcdr_bin_width: float = 0.5
    fewshot_anchors: int = 32
    fewshot_queries: int = 256

    def __post_init__(self):
        if self.n_pairs < 1 or self.fewshot_anchors < 1 or self.fewshot_queries < 1:
            raise ConfigError("metrics counts must be positive")


@dataclass(frozen=True)
class Seeds:
    field: int = 11
    data: int = 22
    model: int = 33
    eval: int = 44


@dataclass(frozen=True)
class RunConfig:
    pathloss: PathLossParams = dc_field(default_factory=PathLossParams)
    radiomap: RadioMapConfig = dc_field(default_factory=RadioMapConfig)
    walk_bank: WalkBankConfig = dc_field(default_factory=WalkBankConfig)
    data: DataConfig = dc_field(default_factory=DataConfig)
    noise: NoiseConfig = dc_field(default_factory=NoiseConfig)
    model: ModelConfig = dc_field(default_factory=ModelConfig)
    schedule: StageSchedule = dc_field(default_factory=StageSchedule)
    ablation: AblationConfig = dc_field(default_factory=AblationConfig)
    metrics: MetricsConfig = dc_field(default_factory=MetricsConfig)
    seeds: Seeds = dc_field(default_factory=Seeds)
    out_dir: str = "runs/default"


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {path or 'root'} must be an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"unknown config key: {path + '.' if path else ''}{key}")
    kwargs = {}
    for key, value in data.items():
        hint = hints[key]
        if dataclasses.is_dataclass(hint) and isinstance(value, dict):
            kwargs[key] = _build(hint, value, f"{path}.{key}" if path else key)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config section {path or 'root'}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from a nested dict, rejecting unknown keys."""
    return _build(RunConfig, data, "")


def config_to_dict(config) -> dict:
    return dataclasses.asdict(config)


def load_config(path) -> RunConfig:
    """Read and strictly parse a JSON config file."""
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def apply_seed_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """Replace named seeds (field/data/model/eval) on a parsed config."""
    valid = {f.name for f in dataclasses.fields(Seeds)}
    bad = set(overrides) - valid
    if bad:
        raise ConfigError(f"unknown seed name: {sorted(bad)[0]} (valid: {sorted(valid)})")
    seeds = dataclasses.replace(config.seeds, **{k: int(v) for k, v in overrides.items()})
    return dataclasses.replace(config, seeds=seeds)
