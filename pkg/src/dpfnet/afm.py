"""Adaptive fusion of the two branches plus residual refinement."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import Conv2d, Module
from .tensor import Tensor, _make


class ResidualBlock(Module):
    def __init__(self, width: int, rng: np.random.Generator, activation: str = "relu"):
        self.activation = activation
        self.conv1 = Conv2d(width, width, 3, rng=rng)
        self.conv2 = Conv2d(width, width, 3, rng=rng)

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.conv2(T.activation(self.conv1(x), self.activation))


class Refiner(Module):
    """lift -> RB -> RB -> proj.  Linear outside the residual blocks."""

    def __init__(self, width: int = 16, rng: np.random.Generator | None = None,
                 activation: str = "relu", channels: int = 3):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.lift = Conv2d(channels, width, 3, rng=rng)
        self.rb1 = ResidualBlock(width, rng, activation)
        self.rb2 = ResidualBlock(width, rng, activation)
        self.proj = Conv2d(width, channels, 3, rng=rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.proj(self.rb2(self.rb1(self.lift(x))))

    def identity_(self) -> "Refiner":
        self.lift.identity_()
        self.proj.identity_()
        for rb in (self.rb1, self.rb2):
            rb.conv2.zero_()
        return self


class AFM(Module):
    """Per-pixel softmax gate over (F_f, F_s) followed by the refiner.

    With ``gated=False`` the weight conv is absent and the refiner acts on
    whatever fused map the caller hands to :meth:`refine`.
    """

    def __init__(self, width: int = 16, rng: np.random.Generator | None = None,
                 activation: str = "relu", channels: int = 3, gated: bool = True):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight_conv = Conv2d(2 * channels, 2, 3, rng=rng) if gated else None
        self.refine = Refiner(width, rng, activation, channels)

    def weights(self, f_f: Tensor, f_s: Tensor) -> tuple[Tensor, Tensor]:
        return afm_weights(f_f, f_s, self)

    def __call__(self, f_f: Tensor, f_s: Tensor) -> Tensor:
        return afm_fuse_refine(f_f, f_s, self)


def afm_weights(f_f: Tensor, f_s: Tensor, params: AFM) -> tuple[Tensor, Tensor]:
    if f_f.shape != f_s.shape:
        raise ValueError(f"branch shape mismatch: {f_f.shape} vs {f_s.shape}")
    if params.weight_conv is None:
        raise ValueError("this fusion head has no weight conv (ungated ablation)")
    w = T.softmax_channels(params.weight_conv(T.concat_channels([f_f, f_s])))
    w_f, w_s = T.split(w, [1, 1], axis=1)
    return w_f, w_s


def convex_mix(a: Tensor, b: Tensor, w: Tensor) -> Tensor:
    """a*w + b*(1 - w) for a per-pixel weight w in [0, 1] broadcast over channels.

    Evaluated as b + w*(a - b) and clamped to [min(a, b), max(a, b)], so
    equal inputs come back unchanged and the convex bound survives rounding.
    The clamp only ever moves a value by an ulp; the backward pass ignores it.
    """
    d = a.data - b.data
    out = np.clip(b.data + w.data * d, np.minimum(a.data, b.data), np.maximum(a.data, b.data))

    def fn(g):
        return g * w.data, g * (1 - w.data), (g * d).sum(axis=1, keepdims=True)

    return _make(out, (a, b, w), fn, "convex_mix")


def afm_fuse(f_f: Tensor, f_s: Tensor, params: AFM) -> Tensor:
    """F_f * w_f + F_s * w_s, one weight per pixel broadcast over channels."""
    w_f, _ = afm_weights(f_f, f_s, params)
    # w_s = 1 - w_f for a two-way softmax
    return convex_mix(f_f, f_s, w_f)


def afm_fuse_refine(f_f: Tensor, f_s: Tensor, params: AFM) -> Tensor:
    return params.refine(afm_fuse(f_f, f_s, params))
