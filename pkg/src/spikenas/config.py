"""Run configuration: nested dataclasses loaded from YAML, unknown keys rejected."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .data import Dataset, SyntheticSpec, load_cifar10_binary, make_synthetic
from .errors import ConfigError
from .genotype import Mode
from .lif import LifConfig
from .network import NetworkConfig
from .scoring import LayerSelection
from .trainer import SurrogateConfig, TrainConfig


@dataclass
class DatasetSection:
    kind: str = "synthetic"  # synthetic | cifar10
    path: str | None = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)


@dataclass
class NetworkSection:
    channels: int = 16
    timesteps: int = 5
    voting: int = 10
    hidden: int = 1024
    dropout: float = 0.5
    tau_m: float = 4.0 / 3.0
    threshold: float = 1.0
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1


@dataclass
class ScoringSection:
    batch_size: int = 16
    layers: str = "downstream"  # downstream | cells | all


@dataclass
class SearchSection:
    num_candidates: int = 50
    mode: str = "forward_and_backward"
    seed: int = 0
    top_k: int = 5
    workers: int = 1


@dataclass
class CorrelateSection:
    population: int = 20
    epochs: int = 20
    seed: int = 0
    workers: int = 1


@dataclass
class RunConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(lr=0.1, epochs=20, augment=False))
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    scoring: ScoringSection = field(default_factory=ScoringSection)
    search: SearchSection = field(default_factory=SearchSection)
    correlate: CorrelateSection = field(default_factory=CorrelateSection)
    output_dir: str = "runs"

    def validate(self) -> "RunConfig":
        if self.dataset.kind not in ("synthetic", "cifar10"):
            raise ConfigError(f"dataset.kind must be synthetic or cifar10, got {self.dataset.kind!r}")
        if self.dataset.kind == "cifar10" and not self.dataset.path:
            raise ConfigError("dataset.path is required for cifar10")
        if self.search.num_candidates < 1:
            raise ConfigError("search.num_candidates must be >= 1")
        if self.search.top_k < 0 or self.search.workers < 1 or self.correlate.workers < 1:
            raise ConfigError("top_k must be >= 0 and workers >= 1")
        if self.correlate.population < 5:
            raise ConfigError("correlate.population must be >= 5")
        if self.correlate.epochs < 0:
            raise ConfigError("correlate.epochs must be >= 0")
        if self.scoring.batch_size < 2:
            raise ConfigError("scoring.batch_size must be >= 2")
        try:
            Mode.parse(self.search.mode)
            LayerSelection(self.scoring.layers)
            self.network_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def input_spec(self) -> tuple[int, tuple[int, int, int]]:
        if self.dataset.kind == "cifar10":
            return 10, (3, 32, 32)
        s = self.dataset.synthetic
        return s.num_classes, (s.channels, s.image_size, s.image_size)

    def network_config(self) -> NetworkConfig:
        n = self.network
        num_classes, dims = self.input_spec()
        return NetworkConfig(channels=n.channels, timesteps=n.timesteps, num_classes=num_classes,
                             input_dims=dims, voting=n.voting, hidden=n.hidden, dropout=n.dropout,
                             lif=LifConfig(n.tau_m, n.threshold), bn_eps=n.bn_eps,
                             bn_momentum=n.bn_momentum)

    def load_dataset(self) -> Dataset:
        if self.dataset.kind == "cifar10":
            return load_cifar10_binary(self.dataset.path)
        return make_synthetic(self.dataset.synthetic)


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown key(s) in {path or 'config'}: {', '.join(sorted(unknown))}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        where = f"{path}.{name}" if path else name
        default = getattr(defaults, name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, where)
        else:
            kwargs[name] = _coerce(value, default, where)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


def _coerce(value, default, where):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    return value


def config_from_dict(data: dict | None) -> RunConfig:
    return _build(RunConfig, data or {}, "").validate()


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
