"""Figures written next to the CSV outputs of ``train`` and ``eval``."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}


def read_metrics(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def plot_training_history(rows: list[dict], path: str | Path) -> Path:
    """Loss components (log scale) and train PSNR against epoch."""
    epochs = [r["epoch"] for r in rows]
    with plt.rc_context(STYLE):
        fig, (ax_loss, ax_psnr) = plt.subplots(1, 2, figsize=(9, 3.4))
        for key, label in (("loss_total", "total"), ("loss_ssim", "SSIM"),
                           ("loss_fourier", "Fourier"), ("loss_perceptual", "perceptual")):
            values = [max(r[key], 1e-12) for r in rows]
            ax_loss.plot(epochs, values, label=label, lw=1.2 if key == "loss_total" else 0.9)
        ax_loss.set_yscale("log")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("loss")
        ax_loss.legend()
        ax_psnr.plot(epochs, [r["train_psnr"] for r in rows], color="k", lw=1.2)
        ax_psnr.set_xlabel("epoch")
        ax_psnr.set_ylabel("train PSNR (dB)")
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_eval_report(report, path: str | Path) -> Path:
    """Per-image PSNR and SSIM bars with dashed means."""
    names = [r.name for r in report.rows]
    x = range(len(names))
    with plt.rc_context(STYLE):
        fig, (ax_p, ax_s) = plt.subplots(2, 1, figsize=(max(4, 0.5 * len(names) + 2), 5), sharex=True)
        ax_p.bar(x, [r.psnr_db for r in report.rows], color="#4c72b0")
        ax_p.axhline(report.mean_psnr, ls="--", color="k", lw=0.8)
        ax_p.set_ylabel("PSNR (dB)")
        ax_s.bar(x, [r.ssim for r in report.rows], color="#55a868")
        ax_s.axhline(report.mean_ssim, ls="--", color="k", lw=0.8)
        ax_s.set_ylabel("SSIM")
        ax_s.set_xticks(list(x))
        ax_s.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_ablation(results: dict[str, float], baseline: float, path: str | Path) -> Path:
    """Final train PSNR per ablation variant against the un-enhanced baseline."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        names = list(results)
        ax.bar(names, [results[n] for n in names], color="#8172b2")
        ax.axhline(baseline, ls="--", color="k", lw=0.8, label="input vs gt")
        ax.set_ylabel("train PSNR (dB)")
        ax.legend()
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path)
        plt.close(fig)
    return path
