"""Run configuration: nested dataclasses addressed by flat dotted keys.

A JSON config file is a flat object, e.g.::

    {"dataset.name": "BZR", "dataset.dir": "data/BZR", "loss.lambda": 1.0}

Every key can be overridden on the command line with ``--set key=value``
(value parsed as JSON, falling back to a plain string).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from .encoder import STREAMS
from .kernels import KERNEL_KINDS


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    dir: Optional[str] = None
    name: Optional[str] = None
    # path to a synthetic spec JSON, or the spec itself as a dict
    synthetic: Optional[object] = None
    max_degree: int = 64


@dataclass
class RelationsConfig:
    enabled: list = field(default_factory=lambda: list(STREAMS))
    top_k: int = 5


@dataclass
class EncoderConfig:
    depth: int = 3
    hidden_dim: int = 32
    seed: Optional[int] = None  # defaults to the run seed


@dataclass
class PoolingConfig:
    temperature: float = 1.0
    mode: str = "aware"
    learnable_terms: bool = False


@dataclass
class KernelConfig:
    kind: str = "dynamic"
    wl_iterations: int = 3
    map: str = "identity"
    gamma: Optional[float] = None
    top_k: int = 10
    sp_labels: bool = False
    # blend of a structural Gram into the dynamic one when building the graph-level graph
    mix: float = 0.0
    mix_kind: str = "wl"


@dataclass
class LossConfig:
    # "lambda" is a keyword; the dotted key is loss.lambda
    lam: float = 1.0
    mu: float = 1.0
    refresh_period: int = 5
    view_align: bool = True


@dataclass
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    relations: RelationsConfig = field(default_factory=RelationsConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    pooling: PoolingConfig = field(default_factory=PoolingConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    k: Optional[int] = None
    batch_size: int = 128
    epochs: int = 50
    learning_rate: float = 1e-3
    seed: int = 0
    runs: int = 10
    early_stop_patience: int = 10
    early_stop_min_delta: float = 1e-5
    kmeans_restarts: int = 10
    workers: int = 1

    def validate(self) -> "RunConfig":
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.k is not None and self.batch_size < self.k:
            raise ConfigError(f"batch_size {self.batch_size} is smaller than k={self.k}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.encoder.depth < 1:
            raise ConfigError("encoder.depth must be >= 1")
        if self.encoder.hidden_dim < 1:
            raise ConfigError("encoder.hidden_dim must be >= 1")
        if not self.pooling.temperature > 0:
            raise ConfigError("pooling.temperature must be positive")
        if self.pooling.mode not in ("aware", "mean"):
            raise ConfigError(f"pooling.mode must be aware or mean, got {self.pooling.mode!r}")
        if self.kernel.kind not in KERNEL_KINDS:
            raise ConfigError(f"kernel.kind must be one of {KERNEL_KINDS}, got {self.kernel.kind!r}")
        if self.kernel.map not in ("identity", "rbf"):
            raise ConfigError(f"kernel.map must be identity or rbf, got {self.kernel.map!r}")
        if self.kernel.mix_kind not in ("wl", "sp", "rw"):
            raise ConfigError("kernel.mix_kind must be wl, sp or rw")
        if not 0.0 <= self.kernel.mix <= 1.0:
            raise ConfigError("kernel.mix must lie in [0, 1]")
        if self.kernel.top_k < 0 or self.relations.top_k < 1:
            raise ConfigError("top_k values must be positive")
        enabled = list(self.relations.enabled)
        if not enabled or any(s not in STREAMS for s in enabled):
            raise ConfigError(f"relations.enabled must be a nonempty subset of {STREAMS}, got {enabled}")
        if self.loss.lam < 0 or self.loss.mu < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.loss.refresh_period < 1:
            raise ConfigError("loss.refresh_period must be >= 1")
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be >= 1")
        ds = self.dataset
        if ds.synthetic is None and not (ds.dir and ds.name):
            raise ConfigError("set dataset.synthetic or both dataset.dir and dataset.name")
        return self

    # -- flat key access ---------------------------------------------------

    def to_flat(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if hasattr(v, "__dataclass_fields__"):
                for sub, val in asdict(v).items():
                    out[f"{f.name}.{_public(sub)}"] = val
            else:
                out[f.name] = v
        return out

    def set(self, key: str, value) -> None:
        parts = key.split(".")
        if len(parts) == 1:
            if parts[0] not in _top_fields() or parts[0] in _section_names():
                raise ConfigError(f"unknown config key {key!r}")
            setattr(self, parts[0], _coerce(key, getattr(self, parts[0]), value))
            return
        if len(parts) != 2 or parts[0] not in _section_names():
            raise ConfigError(f"unknown config key {key!r}")
        section = getattr(self, parts[0])
        attr = _private(parts[1])
        if attr not in {f.name for f in fields(section)}:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(section, attr, _coerce(key, getattr(section, attr), value))

    @classmethod
    def from_flat(cls, flat: dict) -> "RunConfig":
        cfg = cls()
        for key, value in flat.items():
            cfg.set(key, value)
        return cfg

    def copy(self) -> "RunConfig":
        return RunConfig.from_flat(self.to_flat())

    def config_hash(self) -> str:
        blob = json.dumps(self.to_flat(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _public(name: str) -> str:
    return "lambda" if name == "lam" else name


def _private(name: str) -> str:
    return "lam" if name == "lambda" else name


def _top_fields():
    return {f.name for f in fields(RunConfig)}


def _section_names():
    return {"dataset", "relations", "encoder", "pooling", "kernel", "loss"}


def _coerce(key, current, value):
    if isinstance(value, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            pass
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} expects true/false, got {value!r}")
        return value
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{key} expects an integer, got {value!r}")
        return value
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} expects a number, got {value!r}")
        return float(value)
    if isinstance(current, list):
        if isinstance(value, str):
            value = [v for v in value.split(",") if v]
        if not isinstance(value, list):
            raise ConfigError(f"{key} expects a list, got {value!r}")
        return value
    return value


def load_config(path=None, overrides=()) -> RunConfig:
    flat = {}
    if path is not None:
        try:
            with open(path) as fh:
                flat = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(flat, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
    cfg = RunConfig.from_flat(flat)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value)
    return cfg
