"""Configuration tree: dataclasses with defaults, strict YAML loading
(unknown keys are rejected), and dotted-path overrides from the CLI.

The defaults are the desk preset (width 64, batch 32); configs/fullscale.yaml
documents the full-scale settings.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

import yaml

from .errors import ConfigError, ParseError
from .pooling import POOL_KINDS


@dataclass
class ModelConfig:
    d: int = 64
    heads: int = 4
    ffn_expansion: int = 4
    depthwise_kernel: int = 15
    n_subsample_layers: int = 2
    n_blocks: int = 6
    dropout: float = 0.1
    stage_ends: list[int] = field(default_factory=lambda: [2, 4, 6])
    frames: int = 400
    feature_dim: int = 120


@dataclass
class PoolingConfig:
    enabled: bool = True
    kind: str = "max"
    rate: int = 2
    conv_kernel: int = 7
    conv_stride: int = 2  # matches the halving rate; larger strides downsample more aggressively


@dataclass
class McaConfig:
    enabled: bool = True
    mask: list[str] = field(default_factory=lambda: ["e1", "e2", "e3", "e4"])
    weights: list[float] = field(default_factory=lambda: [4.0, 3.0, 2.0, 1.0, 1.0])


@dataclass
class OcSoftmaxConfig:
    alpha: float = 20.0
    m0: float = 0.9
    m1: float = 0.2


@dataclass
class AugmentConfig:
    enabled: bool = True
    noise_prob: float = 0.5
    speed_prob: float = 0.3
    snr_range: list[float] = field(default_factory=lambda: [10.0, 40.0])
    colors: list[str] = field(default_factory=lambda: ["white", "pink", "brown"])
    speed_factors: list[float] = field(default_factory=lambda: [0.9, 1.1])
    spec_augment: bool = True
    max_masked_bins: int = 20


@dataclass
class DataConfig:
    train_manifest: str = ""
    dev_manifest: str = ""
    eval_manifest: str = ""
    cache_dir: str = ""
    augment: AugmentConfig = field(default_factory=AugmentConfig)


@dataclass
class TrainConfig:
    batch_size: int = 32
    steps: int = 2000
    lr: float = 1e-3
    seed: int = 1234
    checkpoint_every: int = 500
    eval_every: int = 500


@dataclass
class IoConfig:
    run_dir: str = "runs/default"


@dataclass
class Config:
    model: ModelConfig = field(default_factory=ModelConfig)
    pooling: PoolingConfig = field(default_factory=PoolingConfig)
    mca: McaConfig = field(default_factory=McaConfig)
    oc: OcSoftmaxConfig = field(default_factory=OcSoftmaxConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    io: IoConfig = field(default_factory=IoConfig)

    @property
    def n_stages(self) -> int:
        return len(self.model.stage_ends)

    @property
    def n_slots(self) -> int:
        """Score slots: one per stage, one global, one final."""
        return self.n_stages + 2

    def slot_names(self) -> list[str]:
        return [f"e{k}" for k in range(1, self.n_stages + 1)] + ["global", "final"]

    def enabled_slots(self) -> list[bool]:
        """Which of the n_slots embeddings exist; final is always on."""
        if not self.mca.enabled:
            return [False] * (self.n_slots - 1) + [True]
        allowed = {f"e{k}" for k in range(1, self.n_stages + 2)}
        flags = [f"e{k}" in self.mca.mask for k in range(1, self.n_stages + 2)]
        return flags + [True]


def _coerce_scalar(name: str, value: Any, default: Any, path: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}{name} must be true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(value, bool) and isinstance(value, int):
        return value
    if isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{path}{name} must be a number, got {value!r}")
    if isinstance(default, (str, list)) and isinstance(value, type(default)):
        return value
    raise ConfigError(f"{path}{name} must be {type(default).__name__}, got {value!r}")


def _build(cls, raw: Any, path: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"expected a mapping at {path or 'top level'}, got {type(raw).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config key {path}{unknown[0]!r}")
    defaults = cls()
    kwargs = {}
    for name, value in raw.items():
        if name in _SUBTREES:
            kwargs[name] = _build(_SUBTREES[name], value, f"{path}{name}.")
        else:
            kwargs[name] = _coerce_scalar(name, value, getattr(defaults, name), path)
    return cls(**kwargs)


_SUBTREES = {
    "model": ModelConfig,
    "pooling": PoolingConfig,
    "mca": McaConfig,
    "oc": OcSoftmaxConfig,
    "data": DataConfig,
    "train": TrainConfig,
    "io": IoConfig,
    "augment": AugmentConfig,
}


def validate(cfg: Config) -> Config:
    m = cfg.model
    if m.d % 4:
        raise ConfigError(f"model.d must be a multiple of 4, got {m.d}")
    if m.d % m.heads:
        raise ConfigError(f"model.d={m.d} not divisible by model.heads={m.heads}")
    if m.depthwise_kernel % 2 == 0:
        raise ConfigError(f"model.depthwise_kernel must be odd, got {m.depthwise_kernel}")
    if not m.stage_ends or sorted(set(m.stage_ends)) != m.stage_ends:
        raise ConfigError(f"model.stage_ends must be strictly increasing, got {m.stage_ends}")
    if m.stage_ends[-1] != m.n_blocks:
        raise ConfigError(f"last stage end {m.stage_ends[-1]} must equal n_blocks {m.n_blocks}")
    if m.stage_ends[0] < 1:
        raise ConfigError(f"stage ends must be >= 1, got {m.stage_ends}")
    if m.frames % (2**m.n_subsample_layers) or m.feature_dim % (2**m.n_subsample_layers):
        raise ConfigError("frames and feature_dim must be divisible by 2^n_subsample_layers")

    p = cfg.pooling
    if p.kind not in POOL_KINDS:
        raise ConfigError(f"pooling.kind {p.kind!r} not one of {POOL_KINDS}")
    if p.rate < 2:
        raise ConfigError(f"pooling.rate must be >= 2, got {p.rate}")
    if p.conv_stride < 1:
        raise ConfigError(f"pooling.conv_stride must be >= 1, got {p.conv_stride}")

    mca = cfg.mca
    if mca.enabled:
        allowed = [f"e{k}" for k in range(1, cfg.n_stages + 2)]
        for entry in mca.mask:
            if entry not in allowed:
                raise ConfigError(f"mca.mask entry {entry!r} not one of {allowed}")
        if len(set(mca.mask)) != len(mca.mask):
            raise ConfigError(f"duplicate entries in mca.mask {mca.mask}")
        if not mca.mask:
            raise ConfigError("mca.mask must enable at least one embedding")
        if len(mca.weights) != cfg.n_slots:
            raise ConfigError(
                f"mca.weights needs {cfg.n_slots} entries for {cfg.n_stages} stages, got {len(mca.weights)}"
            )
        if any(w < 0 for w in mca.weights):
            raise ConfigError(f"mca.weights must be nonnegative, got {mca.weights}")
        enabled = cfg.enabled_slots()
        if sum(w for w, on in zip(mca.weights, enabled) if on) <= 0:
            raise ConfigError("mca.weights sum to zero over the enabled embeddings")

    oc = cfg.oc
    if oc.alpha <= 0:
        raise ConfigError(f"oc.alpha must be positive, got {oc.alpha}")
    if oc.m0 <= oc.m1:
        raise ConfigError(f"oc.m0 must exceed oc.m1, got m0={oc.m0} m1={oc.m1}")

    aug = cfg.data.augment
    for prob_name in ("noise_prob", "speed_prob"):
        v = getattr(aug, prob_name)
        if not 0.0 <= v <= 1.0:
            raise ConfigError(f"data.augment.{prob_name} must be in [0,1], got {v}")
    if len(aug.snr_range) != 2 or aug.snr_range[0] > aug.snr_range[1]:
        raise ConfigError(f"data.augment.snr_range must be [lo, hi], got {aug.snr_range}")
    for color in aug.colors:
        if color not in ("white", "pink", "brown"):
            raise ConfigError(f"unknown noise color {color!r}")

    t = cfg.train
    if t.batch_size < 1 or t.steps < 1:
        raise ConfigError("train.batch_size and train.steps must be >= 1")
    if t.lr <= 0:
        raise ConfigError(f"train.lr must be positive, got {t.lr}")
    if not 0.0 <= m.dropout < 1.0:
        raise ConfigError(f"model.dropout must be in [0,1), got {m.dropout}")
    return cfg


def config_from_dict(raw: dict) -> Config:
    return validate(_build(Config, raw or {}, ""))


def _apply_override(raw: dict, item: str):
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    dotted, _, literal = item.partition("=")
    try:
        value = yaml.safe_load(literal)
    except yaml.YAMLError:
        value = literal
    node = raw
    parts = dotted.strip().split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {item!r} descends through a non-mapping")
    node[parts[-1]] = value


def load_config(path: str | None = None, overrides: list[str] | None = None) -> Config:
    raw: dict = {}
    if path is not None:
        try:
            with open(path) as f:
                raw = yaml.safe_load(f) or {}
        except FileNotFoundError:
            raise ParseError(f"no such config file: {path}")
        except yaml.YAMLError as e:
            raise ParseError(f"config {path} is not valid YAML: {e}")
        if not isinstance(raw, dict):
            raise ParseError(f"config {path} must contain a mapping")
    for item in overrides or []:
        _apply_override(raw, item)
    return config_from_dict(raw)


def override_config(cfg: Config, overrides: list[str]) -> Config:
    """A revalidated copy of cfg with dotted-path overrides applied."""
    raw = dataclasses.asdict(cfg)
    for item in overrides:
        _apply_override(raw, item)
    return config_from_dict(raw)


def config_to_yaml(cfg: Config) -> str:
    return yaml.safe_dump(dataclasses.asdict(cfg), sort_keys=False)


def config_from_yaml(text: str) -> Config:
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ParseError(f"config snapshot is not valid YAML: {e}")
    return config_from_dict(raw)
