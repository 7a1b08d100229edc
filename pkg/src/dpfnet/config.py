"""Flat ``key = value`` configuration files.

Blank lines and ``#`` comments are ignored.  Unknown keys are rejected.
A ``profile`` key, if present, selects the base defaults (``standard`` or
``smoke``) before the remaining keys are applied, regardless of position.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

ABLATIONS = ("full", "mdcm_pfm", "mdcm_only")


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    # model
    ablation: str = "full"
    pfm_width: int = 16
    mdcm_width: int = 32
    afm_width: int = 16
    dilation_a: int = 2
    dilation_b: int = 4
    leaky_slope: float = 0.2
    rb_activation: str = "relu"
    init: str = "uniform"
    # loss
    lambda_a: float = 1.0
    lambda_b: float = 0.2
    ssim_window: int = 11
    extractor_seed: int = 1234
    extractor_weights: str = ""
    # training
    lr: float = 1e-4
    epochs: int = 200
    decay_every: int = 50
    decay_factor: float = 0.5
    batch_size: int = 4
    crop: int = 256
    seed: int = 0
    checkpoint_every: int = 10
    # paths
    dataset: str = ""
    output_dir: str = "runs/dpfnet"

    profile: str = field(default="standard", repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.dilation_a < 1 or self.dilation_b <= self.dilation_a:
            raise ConfigError("need 1 <= dilation_a < dilation_b")
        if not 0 < self.leaky_slope < 1:
            raise ConfigError(f"leaky_slope must be in (0, 1), got {self.leaky_slope}")
        if self.rb_activation not in ("relu", "leaky_relu"):
            raise ConfigError(f"rb_activation must be relu or leaky_relu, got {self.rb_activation!r}")
        if self.init not in ("uniform", "identity"):
            raise ConfigError(f"init must be uniform or identity, got {self.init!r}")
        if self.lambda_a < 0 or self.lambda_b < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.ssim_window < 1 or self.ssim_window % 2 == 0:
            raise ConfigError("ssim_window must be a positive odd integer")
        for name in ("pfm_width", "mdcm_width", "afm_width", "epochs", "decay_every",
                     "batch_size", "crop", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.lr <= 0 or not 0 < self.decay_factor <= 1:
            raise ConfigError("lr must be positive and decay_factor in (0, 1]")

    @classmethod
    def standard(cls, **overrides) -> "Config":
        return cls(**overrides)

    @classmethod
    def smoke(cls, **overrides) -> "Config":
        """Small, fast defaults for overfitting a handful of pairs on a CPU."""
        # 4 pairs at batch 2 for 250 epochs is 500 optimizer steps
        base = dict(crop=64, batch_size=2, epochs=250, lr=1e-3, decay_every=100,
                    checkpoint_every=50, pfm_width=8, mdcm_width=16, init="identity",
                    profile="smoke")
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = [f"profile = {self.profile}"]
        for f in fields(self):
            if f.name != "profile":
                lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"


PROFILES = {"standard": Config.standard, "smoke": Config.smoke}


def _coerce(raw: str, kind, key: str):
    try:
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return raw


def parse_config(text: str) -> Config:
    types = {f.name: f.type for f in fields(Config)}
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = raw
    profile = values.pop("profile", "standard")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    overrides = {k: _coerce(v, types[k], k) for k, v in values.items()}
    return PROFILES[profile](**overrides)


def load_config(path: str | Path) -> Config:
    return parse_config(Path(path).read_text())
