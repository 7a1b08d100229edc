"""Multi-level dilated convolution branch (spatial stream).

A three-layer local head feeds two cascaded dilation blocks.  The head
output and both block outputs are concatenated, squeezed back to three
channels by a 1x1 convolution, and added to the input image.  Nothing here
downsamples; every map keeps the input's H x W.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import Conv2d, Module
from .tensor import Tensor


class DilationBlock(Module):
    """conv at dilation d, then a companion conv at d+1 against gridding."""

    def __init__(self, width: int, d: int, rng: np.random.Generator, slope: float = 0.2):
        self.d = d
        self.slope = slope
        self.conv_d = Conv2d(width, width, 3, dilation=d, rng=rng)
        self.conv_d1 = Conv2d(width, width, 3, dilation=d + 1, rng=rng)

    def __call__(self, f: Tensor) -> Tensor:
        return dilation_block(f, self)

    def receptive_radius(self) -> int:
        return self.d + (self.d + 1)


def dilation_block(f: Tensor, db: DilationBlock) -> Tensor:
    h = T.leaky_relu(db.conv_d(f), db.slope)
    return T.leaky_relu(db.conv_d1(h), db.slope)


class MDCM(Module):
    def __init__(self, width: int = 32, dilations: tuple[int, int] = (2, 4),
                 rng: np.random.Generator | None = None, slope: float = 0.2, in_channels: int = 3):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.slope = slope
        self.head = [
            Conv2d(in_channels, width, 3, rng=rng),
            Conv2d(width, width, 3, rng=rng),
            Conv2d(width, width, 3, rng=rng),
        ]
        self.db_a = DilationBlock(width, dilations[0], rng, slope)
        self.db_b = DilationBlock(width, dilations[1], rng, slope)
        self.fuse = Conv2d(3 * width, in_channels, 1, rng=rng)

    def local_head(self, x: Tensor) -> Tensor:
        for conv in self.head:
            x = T.leaky_relu(conv(x), self.slope)
        return x

    def features(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """(F_local, t1, t2) with t1 = db_a(F_local) and t2 = db_b(t1)."""
        f_local = self.local_head(x)
        t1 = self.db_a(f_local)
        t2 = self.db_b(t1)
        return f_local, t1, t2

    def __call__(self, x: Tensor) -> Tensor:
        return mdcm_forward(x, self)

    def zero_(self) -> "MDCM":
        for p in self.parameters():
            p.data[...] = 0
        return self


def mdcm_forward(x: Tensor, params: MDCM) -> Tensor:
    f_local, t1, t2 = params.features(x)
    return params.fuse(T.concat_channels([t2, t1, f_local])) + x
