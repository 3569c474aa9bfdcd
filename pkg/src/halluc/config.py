"""Experiment configuration: dataclasses, YAML round trip, canonical hash."""

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import yaml

from .classifier import ClsHyper
from .data import SynthSpec
from .errors import ConfigError
from .selection import SCORING_RULES
from .tcgan import GanHyper

ARMS = ("real-only", "augmented")


@dataclass(frozen=True)
class DataConfig:
    """Synthetic dataset parameters, or a path to a stored dataset directory.

    ``seed: null`` means the harness derives a fresh data seed per master
    seed; a fixed integer pins the dataset across the whole sweep.
    """

    num_classes: int = 10
    samples_per_class: int = 50
    image_shape: tuple[int, int, int] = (32, 32, 3)
    embed_dim: int = 16
    noise_level: float = 0.1
    seed: int | None = None
    path: str | None = None

    def synth_spec(self, seed: int) -> SynthSpec:
        return SynthSpec(
            num_classes=self.num_classes,
            samples_per_class=self.samples_per_class,
            image_shape=tuple(self.image_shape),
            embed_dim=self.embed_dim,
            noise_level=self.noise_level,
            seed=seed,
        )


@dataclass(frozen=True)
class SplitSpec:
    base_fraction: float = 0.8
    seed: int | None = None

    def __post_init__(self):
        if not (0.0 < self.base_fraction < 1.0):
            raise ConfigError(f"base_fraction must be in (0,1), got {self.base_fraction}")


@dataclass(frozen=True)
class SelectionSpec:
    pool_size: int = 256
    m: int = 30
    m_sweep: tuple[int, ...] | None = None
    scoring_rule: str = "class-only"

    def __post_init__(self):
        if self.pool_size < 1:
            raise ConfigError("pool_size must be >= 1")
        if self.m < 0:
            raise ConfigError("m must be >= 0")
        if self.scoring_rule not in SCORING_RULES:
            raise ConfigError(f"scoring_rule must be one of {SCORING_RULES}")
        for m in self.m_values():
            if m > self.pool_size:
                raise ConfigError(f"m={m} exceeds pool_size={self.pool_size}")

    def m_values(self) -> tuple[int, ...]:
        return tuple(self.m_sweep) if self.m_sweep else (self.m,)


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    gan: GanHyper = field(default_factory=GanHyper)
    selection: SelectionSpec = field(default_factory=SelectionSpec)
    cls: ClsHyper = field(default_factory=ClsHyper)
    n_shot: tuple[int, ...] = (1,)
    query_per_class: int = 15
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    arms: tuple[str, ...] = ARMS

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not self.n_shot or any(n < 1 for n in self.n_shot):
            raise ConfigError("n_shot values must be positive")
        if self.query_per_class < 1:
            raise ConfigError("query_per_class must be positive")
        bad = [a for a in self.arms if a not in ARMS]
        if bad or not self.arms:
            raise ConfigError(f"arms must be a non-empty subset of {ARMS}, got {self.arms}")


_TUPLE_FIELDS = {"image_shape", "n_shot", "seeds", "arms", "m_sweep"}


def _to_plain(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _to_plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, (list, tuple)):
        return [_to_plain(v) for v in value]
    return value


def config_to_dict(config: ExperimentConfig) -> dict:
    return _to_plain(config)


def _build(cls, d: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in d:
            continue
        v = d[f.name]
        if f.name in _TUPLE_FIELDS and v is not None:
            v = tuple(v)
        kwargs[f.name] = v
    return cls(**kwargs)


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(d) - {f.name for f in dataclasses.fields(ExperimentConfig)}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    sections = {
        "data": DataConfig, "split": SplitSpec, "gan": GanHyper,
        "selection": SelectionSpec, "cls": ClsHyper,
    }
    kwargs = {}
    for name, cls in sections.items():
        if name in d:
            kwargs[name] = _build(cls, d[name] or {})
    for name in ("n_shot", "query_per_class", "seeds", "arms"):
        if name in d:
            v = d[name]
            kwargs[name] = tuple(v) if name in _TUPLE_FIELDS else v
    return ExperimentConfig(**kwargs)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw or {})


def save_config(config: ExperimentConfig, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + f".tmp-{os.getpid()}"
    with open(tmp, "w") as f:
        yaml.safe_dump(config_to_dict(config), f, sort_keys=True, default_flow_style=None)
    os.replace(tmp, path)


def config_hash(config: ExperimentConfig) -> str:
    """Stable hash of the experiment semantics (canonical JSON, sha256)."""
    canon = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
