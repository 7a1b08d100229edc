"""Phase-aware Fourier convolution branch.

The image spectrum is split into amplitude and phase planes, which are
treated as the real and imaginary parts of a complex feature map and
pushed through complex 3x3 convolutions.  Each complex layer is a pair of
real convolutions (phi, psi) shared between both planes:

    P' = phi(P) + psi(A)
    A' = phi(A) - psi(P)

After three blocks of three layers, the planes are recombined as A + jP and
brought back to the image domain with an inverse FFT.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import Conv2d, Module
from .spectral import cartesian_compose, fft2, ifft2, polar_decompose
from .tensor import Tensor


class ComplexConvLayer(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, k: int = 3):
        self.phi = Conv2d(c_in, c_out, k, rng=rng)
        self.psi = Conv2d(c_in, c_out, k, rng=rng)

    def __call__(self, a: Tensor, p: Tensor) -> tuple[Tensor, Tensor]:
        return complex_conv(a, p, self)


def complex_conv(a: Tensor, p: Tensor, layer: ComplexConvLayer) -> tuple[Tensor, Tensor]:
    """One complex convolution; both outputs read the pre-update planes."""
    if a.shape != p.shape:
        raise ValueError(f"amplitude/phase shape mismatch: {a.shape} vs {p.shape}")
    if a.shape[1] != layer.phi.in_channels:
        raise ValueError(
            f"complex_conv expects {layer.phi.in_channels} channels, got {a.shape[1]}"
        )
    n = a.shape[0]
    both = T.concat([a, p], axis=0)
    phi_a, phi_p = T.split(layer.phi(both), [n, n], axis=0)
    psi_a, psi_p = T.split(layer.psi(both), [n, n], axis=0)
    return phi_a - psi_p, phi_p + psi_a


class PfmBlock(Module):
    def __init__(self, channels: list[int], rng: np.random.Generator,
                 activation: str = "leaky_relu", slope: float = 0.2):
        if len(channels) != 4:
            raise ValueError(f"a block needs 4 channel counts (3 layers), got {channels}")
        self.activation = activation
        self.slope = slope
        self.layers = [ComplexConvLayer(channels[i], channels[i + 1], rng) for i in range(3)]

    def __call__(self, a: Tensor, p: Tensor) -> tuple[Tensor, Tensor]:
        return pfm_block(a, p, self)


def pfm_block(a: Tensor, p: Tensor, block: PfmBlock) -> tuple[Tensor, Tensor]:
    for layer in block.layers:
        a, p = complex_conv(a, p, layer)
        a = T.activation(a, block.activation, block.slope)
        p = T.activation(p, block.activation, block.slope)
    return a, p


def channel_plan(width: int = 16, in_channels: int = 3) -> list[list[int]]:
    return [
        [in_channels, width, width, width],
        [width, width, width, width],
        [width, width, width, in_channels],
    ]


class PFM(Module):
    """Frequency branch: image [N,3,H,W] -> F_f [N,3,H,W]."""

    def __init__(self, width: int = 16, rng: np.random.Generator | None = None,
                 activation: str = "leaky_relu", slope: float = 0.2, in_channels: int = 3):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.blocks = [PfmBlock(plan, rng, activation, slope)
                       for plan in channel_plan(width, in_channels)]
        self._last_residual_rms = float("nan")

    @property
    def imag_residual_rms(self) -> float:
        """RMS of the imaginary plane dropped by the last forward pass."""
        return self._last_residual_rms

    def __call__(self, x: Tensor) -> Tensor:
        return pfm_forward(x, self)

    def identity_(self) -> "PFM":
        for block in self.blocks:
            for layer in block.layers:
                layer.phi.identity_()
                layer.psi.zero_()
        return self


def pfm_forward(x: Tensor, params: PFM) -> Tensor:
    s = polar_decompose(fft2(x))
    a, p = s.amplitude, s.phase
    for block in params.blocks:
        a, p = pfm_block(a, p, block)
    z = ifft2(cartesian_compose(a, p))
    params._last_residual_rms = float(np.sqrt(np.mean(z.im.data.astype(np.float64) ** 2)))
    return z.re
