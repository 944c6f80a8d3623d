"""Run configuration: one JSON file with ``dataset``, ``augment``, ``model``,
``train`` and ``eval`` sections. Unknown keys are rejected."""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .augment import AugmentParams
from .dataset import SketchParams
from .nn.networks import PATCHGAN, UNET, NetworkSpec

LOSS_KINDS = ("hinge", "bce")
LR_POLICIES = ("cyclical_triangular", "constant")
SN_TARGETS = ("generator", "discriminator", "both", "none")
EXTRACTORS = ("random_projection", "external")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    loss_kind: str = "hinge"
    lambda_l1: float = 100.0
    batch_size: int = 1
    d_steps_per_g_step: int = 2
    g_lr_interval: tuple[float, float] = (1e-5, 2e-4)
    d_lr_interval: tuple[float, float] = (2e-5, 4e-4)
    lr_step_size: int = 2000
    lr_policy: str = "cyclical_triangular"
    spectral_norm_target: str = "generator"
    total_g_steps: int = 2000
    eval_every: int = 500
    seed: int = 0
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999

    def __post_init__(self):
        self.g_lr_interval = tuple(float(v) for v in self.g_lr_interval)
        self.d_lr_interval = tuple(float(v) for v in self.d_lr_interval)

    def validate(self) -> "TrainConfig":
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"train.loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if self.lr_policy not in LR_POLICIES:
            raise ConfigError(f"train.lr_policy must be one of {LR_POLICIES}, got {self.lr_policy!r}")
        if self.spectral_norm_target not in SN_TARGETS:
            raise ConfigError(f"train.spectral_norm_target must be one of {SN_TARGETS}")
        if self.batch_size < 1 or self.d_steps_per_g_step < 1:
            raise ConfigError("train.batch_size and train.d_steps_per_g_step must be >= 1")
        if self.total_g_steps < 0 or self.eval_every < 1 or self.lr_step_size < 1:
            raise ConfigError("train.total_g_steps >= 0, train.eval_every >= 1 and train.lr_step_size >= 1 required")
        for name in ("g_lr_interval", "d_lr_interval"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigError(f"train.{name} must satisfy 0 < base <= max, got {(lo, hi)}")
            if self.lr_policy == "cyclical_triangular" and not lo < hi:
                raise ConfigError(f"train.{name} needs base < max for the cyclical policy")
        g_lo, g_hi = self.g_lr_interval
        d_lo, d_hi = self.d_lr_interval
        if not (d_hi > g_hi and d_lo >= g_lo):
            raise ConfigError("the discriminator learning-rate interval must sit above the generator's")
        return self


@dataclass
class ModelConfig:
    image_size: int = 64
    g_base_width: int = 32
    g_depth: int = 6
    d_base_width: int = 32
    d_depth: int = 3
    dropout_p: float = 0.5
    n_power_iterations: int = 1

    def specs(self, spectral_norm_target: str, seed: int) -> tuple[NetworkSpec, NetworkSpec]:
        if self.image_size % (2**self.g_depth):
            raise ConfigError(f"model.image_size {self.image_size} not divisible by 2**g_depth")
        g = NetworkSpec(
            UNET, 1, 3, self.g_base_width, self.g_depth,
            spectral_norm=spectral_norm_target in ("generator", "both"),
            dropout_p=self.dropout_p, init_seed=seed, n_power_iterations=self.n_power_iterations,
        )
        d = NetworkSpec(
            PATCHGAN, 4, 1, self.d_base_width, self.d_depth,
            spectral_norm=spectral_norm_target in ("discriminator", "both"),
            dropout_p=0.0, init_seed=seed, n_power_iterations=self.n_power_iterations,
        )
        return g, d


@dataclass
class EvalConfig:
    extractor: str = "random_projection"
    extractor_seed: int = 0
    feature_dim: int = 64
    weights: str | None = None
    fid_samples: int = 0  # 0 = whole test split

    def validate(self) -> "EvalConfig":
        if self.extractor not in EXTRACTORS:
            raise ConfigError(f"eval.extractor must be one of {EXTRACTORS}")
        if self.extractor == "external" and not self.weights:
            raise ConfigError("eval.weights is required for the external extractor")
        return self


@dataclass
class DatasetConfig:
    manifest: str | None = None
    photos: str | None = None
    synthetic_n: int = 0
    size: int = 64
    split_ratio: float = 0.8
    seed: int = 0
    sketch: SketchParams = field(default_factory=SketchParams)


def desk_augment() -> AugmentParams:
    # same 286/256 enlargement ratio, at the 64-pixel desk scale
    return AugmentParams(resize_to=72, crop_to=64)


@dataclass
class ConfigFile:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    augment: AugmentParams = field(default_factory=desk_augment)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> "ConfigFile":
        self.train.validate()
        self.eval.validate()
        if self.augment.crop_to != self.model.image_size:
            raise ConfigError(
                f"augment.crop_to ({self.augment.crop_to}) must equal model.image_size ({self.model.image_size})"
            )
        self.model.specs(self.train.spectral_norm_target, self.train.seed)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a JSON object")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config key {path + '.' if path else ''}{unknown[0]}")
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        hint = hints[f.name]
        if dataclasses.is_dataclass(hint):
            kwargs[f.name] = _build(hint, value, f"{path}.{f.name}" if path else f.name)
        else:
            kwargs[f.name] = _coerce(value, hint, f"{path}.{f.name}" if path else f.name)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {path or 'config'} section: {exc}") from None


def _coerce(value, hint, key: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is tuple:
        if not isinstance(value, (list, tuple)) or len(value) != len(args):
            raise ConfigError(f"{key} must be a list of {len(args)} numbers")
        return tuple(float(v) for v in value)
    if origin in (typing.Union, types.UnionType):
        if value is None:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], key)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(value)
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        return value
    return value


def config_from_dict(data: dict) -> ConfigFile:
    return _build(ConfigFile, data, "")


def load_config(path: str | Path) -> ConfigFile:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from None
    return config_from_dict(data)


def apply_overrides(cfg: ConfigFile, overrides: dict[str, object]) -> ConfigFile:
    """Return a copy of ``cfg`` with dotted-path overrides applied.

    String values are parsed as JSON when possible (``"5"`` -> 5), which is
    how command-line flags arrive. A bare key (``"batch_size"``) is looked up
    in the ``train`` section.
    """
    data = cfg.to_dict()
    for key, value in overrides.items():
        parts = key.split(".")
        if len(parts) == 1:
            parts = ["train", parts[0]]
        if isinstance(value, str):
            try:
                value = json.loads(value)
            except json.JSONDecodeError:
                pass
        node = data
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"unknown config key {key}")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"unknown config key {key}")
        node[parts[-1]] = value
    return config_from_dict(data)
