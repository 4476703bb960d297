"""Configuration for the full pipeline: one file, sectioned per stage.

Files may be TOML or JSON. Values can be overridden with dotted paths
(``generator.train_steps=500``) from the CLI.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

try:
    import tomllib  # py>=3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass
class SceneGenConfig:
    height: int = 64
    width: int = 128
    max_objects: int = 8
    bias_flag: bool = False
    supersample: int = 2
    # per-lane occupancy probabilities (left, primary, right)
    p_occupy: float = 0.45
    p_second_object: float = 0.25
    p_loose_object: float = 0.10
    p_barrier: float = 0.25
    p_brake_light: float = 0.5
    marking_probs: List[float] = field(default_factory=lambda: [0.35, 0.25, 0.25, 0.15])

    def validate(self):
        if self.height <= 0 or self.width <= 0:
            raise ConfigError("image dims must be positive")
        if self.max_objects < 0:
            raise ConfigError("max_objects must be >= 0")
        if self.supersample < 1:
            raise ConfigError("supersample must be >= 1")
        return self


@dataclass
class GeneratorConfig:
    num_blobs: int = 12
    d_style: int = 32
    d_noise: int = 64
    d_layout: int = 128          # penultimate layout feature size
    img_height: int = 64
    img_width: int = 128
    grid_height: int = 32
    grid_width: int = 64
    tau: float = 0.05            # splat temperature
    layout_hidden: int = 192
    synth_channels: int = 32
    disc_channels: int = 32
    # training
    train_steps: int = 6000
    batch_size: int = 16
    lr_g: float = 2e-3
    lr_d: float = 2e-3
    adam_betas: List[float] = field(default_factory=lambda: [0.0, 0.99])
    r1_gamma: float = 0.3
    r1_every: int = 8
    ema_decay: float = 0.99
    sample_every: int = 1000
    seed: int = 0

    def validate(self):
        if self.num_blobs < 1:
            raise ConfigError("num_blobs must be >= 1")
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if self.img_height <= 0 or self.img_width <= 0:
            raise ConfigError("image dims must be positive")
        return self


@dataclass
class ClassifierConfig:
    channels: List[int] = field(default_factory=lambda: [24, 48, 64, 64])
    probe_layer: str = "block4"
    epochs: int = 8
    batch_size: int = 32
    lr: float = 2e-3
    seed: int = 1


@dataclass
class SegmenterConfig:
    base_channels: int = 24
    epochs: int = 6
    batch_size: int = 16
    lr: float = 2e-3
    seed: int = 2


@dataclass
class MetricNetConfig:
    """Independently trained feature net backing perceptual distance and FID."""

    channels: List[int] = field(default_factory=lambda: [16, 32, 48, 64])
    probe_layer: str = "block4"
    epochs: int = 6
    batch_size: int = 32
    lr: float = 2e-3
    seed: int = 3


@dataclass
class EncoderConfig:
    hidden: int = 256
    pretrain_steps: int = 2000
    pretrain_lr: float = 0.005
    pretrain_batch: int = 32
    finetune_steps: int = 1500
    finetune_lr: float = 0.002
    finetune_batch: int = 16
    w_perceptual: float = 1.0
    w_latent: float = 0.1
    w_decision: float = 0.05
    real_fraction: float = 0.5
    seed: int = 4


@dataclass
class InversionConfig:
    steps: int = 300
    lr: float = 0.02
    cosine_decay: bool = True
    w_perceptual: float = 1.0
    w_pixel: float = 1.0
    w_feature: float = 1.0
    w_anchor: float = 0.1
    monotone: bool = False       # debug mode: backtracking line search
    seed: int = 0

    def validate(self):
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        for name in ("w_perceptual", "w_pixel", "w_feature", "w_anchor"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        return self


@dataclass
class CFConfig:
    steps: int = 200
    lr: float = 0.03
    early_stop_margin: float = 0.1
    early_stop_patience: int = 10
    activation_scale: float = 0.08   # initial blob size when targeting inactive blobs
    hold_other_heads: bool = False
    hold_weight: float = 0.1
    iou_threshold: float = 0.8
    modified_threshold: float = 1e-3
    seed: int = 0


@dataclass
class EvalConfig:
    lambdas: List[float] = field(default_factory=lambda: [0.0, 0.01, 0.03, 0.1, 0.3, 1.0])
    n_queries: int = 100
    semantics_samples: int = 200
    centroid_bins: int = 8


@dataclass
class DataConfig:
    n_train: int = 2000
    n_val: int = 300
    seed_offset: int = 0


@dataclass
class PipelineConfig:
    scenegen: SceneGenConfig = field(default_factory=SceneGenConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    metric: MetricNetConfig = field(default_factory=MetricNetConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    inversion: InversionConfig = field(default_factory=InversionConfig)
    cf: CFConfig = field(default_factory=CFConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self):
        self.scenegen.validate()
        self.generator.validate()
        self.inversion.validate()
        if self.generator.img_height != self.scenegen.height or self.generator.img_width != self.scenegen.width:
            raise ConfigError("generator image dims must match scenegen dims")
        return self


_SECTIONS = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}


def _coerce(value: str, current):
    if isinstance(current, bool):
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"cannot parse boolean from {value!r}")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    if isinstance(current, list):
        return json.loads(value)
    return value


def load_config(path=None, overrides: List[str] = ()) -> PipelineConfig:
    """Build a PipelineConfig from an optional TOML/JSON file plus overrides."""
    raw = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        if p.suffix == ".json":
            raw = json.loads(p.read_text())
        else:
            raw = tomllib.loads(p.read_text())
    cfg = PipelineConfig()
    for section, values in raw.items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        target = getattr(cfg, section)
        for key, val in values.items():
            if not hasattr(target, key):
                raise ConfigError(f"unknown config key {section}.{key}")
            setattr(target, key, val)
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override must look like section.key=value, got {ov!r}")
        dotted, value = ov.split("=", 1)
        parts = dotted.strip().split(".")
        if len(parts) != 2 or parts[0] not in _SECTIONS:
            raise ConfigError(f"unknown override target {dotted!r}")
        target = getattr(cfg, parts[0])
        if not hasattr(target, parts[1]):
            raise ConfigError(f"unknown config key {dotted!r}")
        setattr(target, parts[1], _coerce(value.strip(), getattr(target, parts[1])))
    return cfg.validate()


def config_to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)
