"""Experiment configuration: a versioned YAML tree mapped onto dataclasses.

Every key is checked against the target dataclass before anything runs;
unknown keys and wrongly-typed values are reported with their dotted path.

Example::

    schema_version: 1
    name: planes
    seed: 3
    scene: {kind: layered-planes, resolution: 32}
    prior: {a: 2.0, b: 1.0, sigma_n_rel: 0.1}
    init: {mode: dense, jitter: 0.2}
    train:
      iterations: 2000
      loss: {scales: [4, 8, 16], lambda_depth: 0.05}
    variants:
      - {name: DI, loss: {lambda_depth: 0.0}}
      - {name: DI+HD+PC}
"""

from __future__ import annotations

import dataclasses
import difflib
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .depth import ConfigError
from .losses import LossConfig
from .priors import KEEPABLE, PriorModel, SceneRecipe
from .trainer import LearningRates, TrainConfig

SCHEMA_VERSION = 1
INIT_MODES = ("dense", "sparse")


@dataclass(frozen=True)
class InitConfig:
    mode: str = "dense"
    jitter: float = 0.2
    drop_fraction: float = 0.3
    scale_factor: float = 0.5
    keep: tuple[str, ...] = ()
    min_views: int = 2

    def __post_init__(self):
        if self.mode not in INIT_MODES:
            raise ConfigError(f"init.mode: expected one of {INIT_MODES}, got {self.mode!r}")
        if self.jitter < 0:
            raise ConfigError("init.jitter: must be >= 0")
        if not 0 <= self.drop_fraction < 1:
            raise ConfigError("init.drop_fraction: must lie in [0, 1)")
        if not self.scale_factor > 0:
            raise ConfigError("init.scale_factor: must be > 0")
        bad = sorted(set(self.keep) - set(KEEPABLE))
        if bad:
            raise ConfigError(f"init.keep: unknown attributes {bad}; allowed {list(KEEPABLE)}")
        if self.min_views < 1:
            raise ConfigError("init.min_views: must be >= 1")


@dataclass(frozen=True)
class Variant:
    """One row of an ablation sweep: a name plus loss-setting overrides."""

    name: str
    loss: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    name: str = "experiment"
    seed: int = 0
    seeds: tuple[int, ...] = ()
    output: str = "runs"
    scene: SceneRecipe = field(default_factory=SceneRecipe)
    prior: PriorModel = field(default_factory=PriorModel)
    init: InitConfig = field(default_factory=InitConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    variants: tuple[Variant, ...] = ()

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"schema_version: unsupported value {self.schema_version}; expected {SCHEMA_VERSION}"
            )
        if not self.name or "/" in self.name:
            raise ConfigError("name: must be a non-empty string without '/'")
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise ConfigError("variants: names must be unique")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds: must be unique")

    @property
    def is_sweep(self) -> bool:
        return bool(self.variants) or len(self.seeds) > 1

    def run_seeds(self) -> tuple[int, ...]:
        return self.seeds or (self.seed,)

    def variant_loss(self, variant: Variant) -> LossConfig:
        return self.train.loss.replace(**variant.loss)


# -- generic tree -> dataclass conversion ---------------------------------------


def _type_name(tp) -> str:
    return getattr(tp, "__name__", str(tp))


def _scalar(value, tp, path: str):
    if tp is bool:
        if isinstance(value, bool):
            return value
    elif tp is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif tp is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif tp is str:
        if isinstance(value, str):
            return value
    elif tp is dict:
        if isinstance(value, dict):
            return value
    else:  # pragma: no cover - schema authoring error
        raise TypeError(f"unsupported field type {tp}")
    raise ConfigError(f"{path}: expected {_type_name(tp)}, got {type(value).__name__} {value!r}")


def _convert(value, tp, path: str):
    if dataclasses.is_dataclass(tp):
        return build(tp, value, path)
    origin = typing.get_origin(tp)
    if origin is tuple:
        args = typing.get_args(tp)
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{path}: expected {len(args)} entries, got {len(value)}")
        return tuple(_convert(v, t, f"{path}[{i}]") for i, (v, t) in enumerate(zip(value, args)))
    return _scalar(value, tp, path)


def build(cls, data, path: str = ""):
    """Instantiate dataclass ``cls`` from a mapping, rejecting unknown keys."""
    where = path or "<root>"
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else str(key)
        if key not in known:
            close = difflib.get_close_matches(str(key), sorted(known), n=1)
            hint = f"; did you mean {close[0]!r}?" if close else ""
            raise ConfigError(f"{sub}: unknown key{hint}")
        kwargs[key] = _convert(value, hints[key], sub)
    try:
        return cls(**kwargs)
    except TypeError as exc:  # missing required field
        raise ConfigError(f"{where}: {exc}") from None
    except ConfigError as exc:
        if path and not str(exc).startswith(path):
            raise ConfigError(f"{path}: {exc}") from None
        raise


def _variant(data, path: str) -> Variant:
    v = build(Variant, data, path)
    hints = typing.get_type_hints(LossConfig)
    loss = {}
    for key, value in v.loss.items():
        sub = f"{path}.loss.{key}"
        if key not in hints:
            close = difflib.get_close_matches(str(key), sorted(hints), n=1)
            hint = f"; did you mean {close[0]!r}?" if close else ""
            raise ConfigError(f"{sub}: unknown key{hint}")
        loss[key] = _convert(value, hints[key], sub)
    return Variant(v.name, loss)


def from_mapping(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>: expected a mapping")
    if "schema_version" not in data:
        raise ConfigError("schema_version: required")
    data = dict(data)
    variants = data.pop("variants", None) or []
    if not isinstance(variants, list):
        raise ConfigError("variants: expected a list")
    cfg = build(ExperimentConfig, data)
    parsed = tuple(_variant(v, f"variants[{i}]") for i, v in enumerate(variants))
    for v in parsed:
        try:
            cfg.variant_loss(v)
        except ConfigError as exc:
            raise ConfigError(f"variants[{v.name}]: {exc}") from None
    return dataclasses.replace(cfg, variants=parsed)


def load(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    return from_mapping(data)


def to_mapping(cfg: ExperimentConfig) -> dict:
    """Plain-data form of ``cfg`` (tuples become lists) that round-trips through YAML."""

    def plain(x):
        if dataclasses.is_dataclass(x):
            return {f.name: plain(getattr(x, f.name)) for f in dataclasses.fields(x)}
        if isinstance(x, (list, tuple)):
            return [plain(v) for v in x]
        if isinstance(x, dict):
            return {k: plain(v) for k, v in x.items()}
        return x

    return plain(cfg)


__all__ = [
    "ExperimentConfig",
    "InitConfig",
    "LearningRates",
    "SCHEMA_VERSION",
    "Variant",
    "build",
    "from_mapping",
    "load",
    "to_mapping",
]
