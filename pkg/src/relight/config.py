"""Run configuration.

A flat dataclass parsed from a plain ``key = value`` text file. Unknown keys
are rejected so a typo cannot silently fall back to a default.
"""

import dataclasses
from dataclasses import dataclass
from pathlib import Path

SEG_CLASS_NAMES = (
    "sky",
    "grass",
    "ground",
    "mountains",
    "water",
    "buildings",
    "trees",
    "roads",
    "humans",
)

DAYTIME_CLASS_NAMES = ("night", "sunset/sunrise", "morning/evening", "noon")


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    # latent sizes
    style_dim: int = 3
    class_count: int = 9

    # objective weights
    lambda1: float = 5.0
    lambda2: float = 2.0
    lambda3: float = 3.0
    lambda4: float = 1.0
    lambda5: float = 0.1
    lambda6: float = 4.0
    lambda7: float = 1.0

    # optimization
    lr: float = 1e-4
    lr_halving_period: int = 200_000
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 4
    pool_size: int = 256

    # geometry
    resolution: int = 256

    # network widths; content_channels is 4x base_channels (two stride-2 stages)
    base_channels: int = 64
    style_channels: int = 64
    mapper_hidden: int = 256
    disc_channels: int = 64

    # inference knobs
    variance_scale: float = 0.7
    interp_alpha: float = 0.7

    # enhancer
    enhance_factor: int = 4
    enhance_mode: str = "bilinear"
    enh_channels: int = 64
    enh_growth: int = 32
    enh_lr: float = 1e-4
    perceptual_weight: float = 10.0
    feature_matching_weight: float = 10.0
    adversarial_weight: float = 1.0

    # io / backends
    resize_policy: str = "crop"
    feature_backend: str = "random-conv"
    classifier_backend: str = "toy"

    seed: int = 0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "lambda6", "lambda7"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.style_dim < 1:
            raise ConfigError("style_dim must be positive")
        if self.class_count < 1:
            raise ConfigError("class_count must be positive")
        if self.lr <= 0 or self.enh_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.lr_halving_period < 1:
            raise ConfigError("lr_halving_period must be positive")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2 (training pairs images)")
        if self.pool_size < 1:
            raise ConfigError("pool_size must be positive")
        if self.resolution % 16 != 0:
            raise ConfigError("resolution must be a multiple of 16")
        if self.enhance_factor != 4:
            raise ConfigError("enhance_factor is fixed at 4")
        if self.enhance_mode not in ("strided", "bilinear"):
            raise ConfigError("enhance_mode must be 'strided' or 'bilinear'")
        if not 0.0 <= self.variance_scale <= 1.0:
            raise ConfigError("variance_scale must lie in [0, 1]")
        if not 0.0 <= self.interp_alpha <= 1.0:
            raise ConfigError("interp_alpha must lie in [0, 1]")
        if self.resize_policy not in ("crop", "reject"):
            raise ConfigError("resize_policy must be 'crop' or 'reject'")
        if self.base_channels < 1 or self.style_channels < 1 or self.disc_channels < 1:
            raise ConfigError("channel widths must be positive")

    @property
    def content_channels(self) -> int:
        return 4 * self.base_channels

    @property
    def loss_lambdas(self) -> tuple:
        return (
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.lambda4,
            self.lambda5,
            self.lambda6,
            self.lambda7,
        )


def desk_scale(**overrides) -> Config:
    """A small configuration for CPU-scale experiments and tests."""
    values = dict(
        resolution=64,
        batch_size=2,
        base_channels=16,
        style_channels=16,
        mapper_hidden=64,
        disc_channels=16,
        enh_channels=32,
        enh_growth=16,
        pool_size=64,
    )
    values.update(overrides)
    return Config(**values)


_FIELDS = {f.name: f for f in dataclasses.fields(Config)}


def _parse_value(key: str, raw: str, target_type):
    raw = raw.strip()
    try:
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        if target_type is str:
            return raw
    except ValueError:
        pass
    raise ConfigError(f"key '{key}' expects {target_type.__name__}, got '{raw}'")


def load_config(path) -> Config:
    """Parse a ``key = value`` config file; unknown keys and bad types are errors."""
    text = Path(path).read_text()
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got '{line}'")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key '{key}'")
        # field types are all plain int/float/str, recoverable from the default
        values[key] = _parse_value(key, raw, type(_FIELDS[key].default))
    return Config(**values)


def save_config(config: Config, path) -> None:
    lines = [f"{f.name} = {getattr(config, f.name)}" for f in dataclasses.fields(Config)]
    Path(path).write_text("\n".join(lines) + "\n")
