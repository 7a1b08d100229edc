"""Dual-branch low-light image enhancement on a small numpy autodiff core.

A phase-aware Fourier branch and a multi-level dilated spatial branch are
fused per pixel by a softmax gate and refined by two residual blocks.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import Config, load_config, parse_config
from .data import discover_pairs, load_image, load_pairs, save_image, synthetic_pairs
from .losses import FrozenFeatureExtractor, LossWeights, fourier_loss, perceptual_loss, ssim, total_loss
from .metrics import EvalReport, evaluate_dataset, psnr, ssim_metric
from .model import DPFNet, build_model
from .spectral import fft2, ifft2, polar_compose, polar_decompose
from .tensor import GradTape, NumericError, Tensor
from .train import train

__version__ = "0.1.0"

__all__ = [
    "Config", "DPFNet", "EvalReport", "FrozenFeatureExtractor", "GradTape", "LossWeights", "NumericError",
    "Tensor", "build_model", "discover_pairs", "evaluate_dataset", "fft2", "fourier_loss", "ifft2",
    "load_checkpoint", "load_config", "load_image", "load_pairs", "parse_config", "perceptual_loss",
    "polar_compose", "polar_decompose", "psnr", "save_checkpoint", "save_image", "ssim", "ssim_metric",
    "synthetic_pairs", "total_loss", "train",
]
