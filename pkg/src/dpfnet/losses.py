"""Training objective: SSIM loss + weighted Fourier loss + weighted perceptual loss."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .spectral import fft2, spectrum_channels
from .tensor import Tensor

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_SIGMA = 1.5
EXTRACTOR_WIDTHS = (3, 8, 16, 32, 64)


@dataclass(frozen=True)
class LossWeights:
    lambda_a: float = 1.0
    lambda_b: float = 0.2

    def __post_init__(self):
        if self.lambda_a < 0 or self.lambda_b < 0:
            raise ValueError("loss weights must be nonnegative")


def gaussian_taps(window: int = 11, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(window) - (window - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _check_pair(x: Tensor, y: Tensor, what: str) -> None:
    if x.shape != y.shape:
        raise ValueError(f"{what}: shape mismatch {x.shape} vs {y.shape}")


def ssim(x: Tensor, y: Tensor, window: int = 11, sigma: float = SSIM_SIGMA,
         data_range: float = 1.0) -> Tensor:
    """Mean structural similarity over valid Gaussian windows, channels and batch."""
    x, y = T.as_tensor(x), T.as_tensor(y)
    _check_pair(x, y, "ssim")
    h, w = x.shape[-2:]
    if h < window or w < window:
        raise ValueError(f"ssim: image {h}x{w} smaller than the {window}x{window} window")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    taps = gaussian_taps(window, sigma)

    mu_x = T.filter_valid(x, taps)
    mu_y = T.filter_valid(y, taps)
    mu_xx = mu_x * mu_x
    mu_yy = mu_y * mu_y
    mu_xy = mu_x * mu_y
    var_x = T.filter_valid(x * x, taps) - mu_xx
    var_y = T.filter_valid(y * y, taps) - mu_yy
    cov = T.filter_valid(x * y, taps) - mu_xy

    num = (mu_xy * 2 + c1) * (cov * 2 + c2)
    den = (mu_xx + mu_yy + c1) * (var_x + var_y + c2)
    return T.mean(num / den)


def ssim_loss(x: Tensor, y: Tensor, window: int = 11) -> Tensor:
    return 1 - ssim(x, y, window)


def fourier_loss(x: Tensor, y: Tensor) -> Tensor:
    """Mean squared distance between cat[amplitude, phase] spectra, averaged over the batch.

    Phases are compared as raw principal values; no 2*pi unwrapping.
    """
    x, y = T.as_tensor(x), T.as_tensor(y)
    _check_pair(x, y, "fourier_loss")
    d = spectrum_channels(fft2(x)) - spectrum_channels(fft2(y))
    return T.mean(d * d)


class FrozenFeatureExtractor:
    """Fixed conv stack standing in for a pretrained perceptual network.

    Four stages of 3x3 conv, ReLU and 2x2 average pooling.  Weights are
    drawn once from ``seed`` (He-uniform, so activations keep their scale
    through the ReLUs) or read from a checkpoint-format file with entries
    ``stage{i}.weight`` / ``stage{i}.bias``.  They are plain constants: no
    gradient is ever produced for them.
    """

    def __init__(self, seed: int = 1234, widths=EXTRACTOR_WIDTHS,
                 weights: list[tuple[np.ndarray, np.ndarray]] | None = None):
        self.seed = seed
        if weights is None:
            rng = np.random.default_rng(seed)
            weights = []
            for c_in, c_out in zip(widths[:-1], widths[1:]):
                bound = np.sqrt(6.0 / (c_in * 9))
                kernel = rng.uniform(-bound, bound, (c_out, c_in, 3, 3)).astype(np.float32)
                weights.append((kernel, np.zeros(c_out, dtype=np.float32)))
        self._stages = [(Tensor(k), Tensor(b)) for k, b in weights]

    @classmethod
    def from_file(cls, path: str | Path) -> "FrozenFeatureExtractor":
        from .checkpoint import read_entries

        entries = read_entries(path)
        weights, i = [], 0
        while f"stage{i}.weight" in entries:
            weights.append((entries[f"stage{i}.weight"], entries[f"stage{i}.bias"]))
            i += 1
        if not weights:
            raise ValueError(f"{path}: no stage0.weight entry")
        return cls(seed=-1, weights=weights)

    @classmethod
    def from_config(cls, cfg) -> "FrozenFeatureExtractor":
        if cfg.extractor_weights:
            return cls.from_file(cfg.extractor_weights)
        return cls(cfg.extractor_seed)

    def astype(self, dtype) -> "FrozenFeatureExtractor":
        self._stages = [(Tensor(k.data, dtype=dtype), Tensor(b.data, dtype=dtype))
                        for k, b in self._stages]
        return self

    def named_weights(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (k, b) in enumerate(self._stages):
            out[f"stage{i}.weight"] = k.data
            out[f"stage{i}.bias"] = b.data
        return out

    def checksum(self) -> str:
        h = hashlib.sha256()
        for k, b in self._stages:
            h.update(k.data.tobytes())
            h.update(b.data.tobytes())
        return h.hexdigest()

    def __call__(self, x: Tensor) -> Tensor:
        for kernel, bias in self._stages:
            x = T.avg_pool2d(T.relu(T.conv2d(x, kernel, bias)), 2)
        return x


def perceptual_loss(x: Tensor, y: Tensor, extractor: FrozenFeatureExtractor) -> Tensor:
    """||phi(x) - phi(y)||^2 / (W*H*C) of the final feature map, averaged over the batch."""
    x, y = T.as_tensor(x), T.as_tensor(y)
    _check_pair(x, y, "perceptual_loss")
    d = extractor(x) - extractor(y)
    return T.mean(d * d)


@dataclass
class LossTerms:
    total: Tensor
    ssim: Tensor
    fourier: Tensor
    perceptual: Tensor

    def values(self) -> dict[str, float]:
        return {
            "loss_total": self.total.item(),
            "loss_ssim": self.ssim.item(),
            "loss_fourier": self.fourier.item(),
            "loss_perceptual": self.perceptual.item(),
        }


def loss_terms(x: Tensor, y: Tensor, weights: LossWeights, extractor: FrozenFeatureExtractor,
               window: int = 11) -> LossTerms:
    ls = ssim_loss(x, y, window)
    lf = fourier_loss(x, y)
    lp = perceptual_loss(x, y, extractor)
    total = ls + lf * weights.lambda_a + lp * weights.lambda_b
    return LossTerms(total, ls, lf, lp)


def total_loss(x: Tensor, y: Tensor, weights: LossWeights | None = None,
               extractor: FrozenFeatureExtractor | None = None, window: int = 11) -> Tensor:
    weights = weights if weights is not None else LossWeights()
    extractor = extractor if extractor is not None else FrozenFeatureExtractor()
    return loss_terms(x, y, weights, extractor, window).total
