"""Full-reference quality metrics and dataset evaluation reports."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import atomic_write_bytes
from .losses import ssim as _ssim
from .tensor import Tensor

log = logging.getLogger(__name__)

PSNR_CAP_DB = 99.0


def psnr(x: np.ndarray, y: np.ndarray) -> float:
    """PSNR in dB for unit dynamic range; inputs are clamped to [0, 1] first.

    Zero MSE reports :data:`PSNR_CAP_DB` instead of infinity.
    """
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"psnr: shape mismatch {x.shape} vs {y.shape}")
    mse = np.mean((np.clip(x, 0, 1) - np.clip(y, 0, 1)) ** 2)
    if mse == 0:
        return PSNR_CAP_DB
    return float(min(10 * np.log10(1.0 / mse), PSNR_CAP_DB))


def ssim_metric(x: np.ndarray, y: np.ndarray, window: int = 11) -> float:
    """SSIM of two [C,H,W] (or [N,C,H,W]) images in float64, clamped to [0, 1]."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0, 1)
    y = np.clip(np.asarray(y, dtype=np.float64), 0, 1)
    if x.ndim == 3:
        x, y = x[None], y[None]
    return _ssim(Tensor(x), Tensor(y), window).item()


@dataclass
class EvalRow:
    name: str
    psnr_db: float
    ssim: float


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    checkpoint: str = ""
    config: str = ""

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([r.psnr_db for r in self.rows])) if self.rows else float("nan")

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r.ssim for r in self.rows])) if self.rows else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["name", "psnr_db", "ssim"])
        for r in self.rows:
            writer.writerow([r.name, f"{r.psnr_db:.6f}", f"{r.ssim:.6f}"])
        writer.writerow(["MEAN", f"{self.mean_psnr:.6f}", f"{self.mean_ssim:.6f}"])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        atomic_write_bytes(path, self.to_csv().encode())

    def table(self) -> str:
        width = max([len(r.name) for r in self.rows] + [4])
        lines = []
        if self.checkpoint:
            lines.append(f"checkpoint: {self.checkpoint}")
        if self.config:
            lines.append(f"config: {self.config}")
        lines.append(f"{'name':<{width}}  {'PSNR (dB)':>10}  {'SSIM':>7}")
        lines.append("-" * (width + 21))
        for r in self.rows:
            lines.append(f"{r.name:<{width}}  {r.psnr_db:>10.3f}  {r.ssim:>7.4f}")
        lines.append("-" * (width + 21))
        lines.append(f"{'MEAN':<{width}}  {self.mean_psnr:>10.3f}  {self.mean_ssim:>7.4f}")
        if self.skipped:
            lines.append(f"skipped: {', '.join(self.skipped)}")
        return "\n".join(lines)


def enhance(model, low: np.ndarray) -> np.ndarray:
    """Run ``model`` on one [3,H,W] image at full resolution; output clamped to [0, 1]."""
    if model is None:
        return np.clip(low, 0, 1)
    out = model(Tensor(low[None].astype(np.float32)))
    return np.clip(out.data[0], 0, 1)


def evaluate_dataset(model, items, window: int = 11, checkpoint: str = "",
                     config: str = "") -> EvalReport:
    """PSNR/SSIM of ``model`` outputs against ground truth for each (name, low, gt).

    ``model`` may be a network, a checkpoint path, or None (score the low
    images directly).  Images smaller than the SSIM window are skipped.
    """
    if isinstance(model, (str, Path)):
        from .checkpoint import load_checkpoint

        checkpoint = checkpoint or str(model)
        model = load_checkpoint(model)[0]
    items = list(items)
    if not items:
        raise ValueError("evaluate_dataset needs at least one pair")
    report = EvalReport(checkpoint=checkpoint, config=config)
    for name, low, gt in items:
        h, w = gt.shape[-2:]
        if h < window or w < window:
            log.warning("%s: %dx%d is smaller than the SSIM window; row skipped", name, h, w)
            report.skipped.append(name)
            continue
        out = enhance(model, low)
        report.rows.append(EvalRow(name, psnr(out, gt), ssim_metric(out, gt, window)))
    return report
