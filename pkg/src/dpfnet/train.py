"""Adam, the step-decay schedule, and the random-crop training loop."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_model_state, read_entries, save_checkpoint
from .config import Config
from .losses import FrozenFeatureExtractor, LossWeights, loss_terms
from .metrics import psnr
from .model import DPFNet
from .tensor import GradTape, NumericError, Tensor

log = logging.getLogger(__name__)

METRICS_HEADER = ["epoch", "lr", "loss_total", "loss_ssim", "loss_fourier",
                  "loss_perceptual", "train_psnr"]
CHECKPOINT_NAME = "checkpoint.dpfn"
METRICS_NAME = "metrics.csv"


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: dict[str, Tensor], **hyper) -> "AdamState":
        return cls(
            {k: np.zeros_like(p.data) for k, p in params.items()},
            {k: np.zeros_like(p.data) for k, p in params.items()},
            **hyper,
        )

    def state_entries(self) -> dict[str, np.ndarray]:
        out = {"adam.t": np.float32(self.t)}
        for k in self.m:
            out[f"adam.m.{k}"] = self.m[k]
            out[f"adam.v.{k}"] = self.v[k]
        return out

    @classmethod
    def from_entries(cls, entries: dict[str, np.ndarray], params: dict[str, Tensor]) -> "AdamState":
        state = cls.fresh(params)
        if "adam.t" not in entries:
            return state
        state.t = int(entries["adam.t"])
        for k, p in params.items():
            for slot, store in (("m", state.m), ("v", state.v)):
                arr = entries.get(f"adam.{slot}.{k}")
                if arr is None or arr.shape != p.shape:
                    raise ValueError(f"optimizer state for {k} missing or mis-shaped")
                store[k] = arr.astype(p.dtype, copy=True)
        return state


def adam_step(params: dict[str, Tensor], grads: dict[Tensor, np.ndarray],
              state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place.

    Parameters without a gradient entry are left alone.  A non-finite
    gradient aborts the whole step before anything is modified.
    """
    for name, p in params.items():
        g = grads.get(p)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** state.t
    c2 = 1 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(p)
        if g is None:
            continue
        g = g.astype(p.dtype, copy=False)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)


def lr_at_epoch(epoch: int, cfg: Config) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be nonnegative, got {epoch}")
    return cfg.lr * cfg.decay_factor ** (epoch // cfg.decay_every)


def random_crop(rng: np.random.Generator, low: np.ndarray, gt: np.ndarray, size: int):
    h, w = low.shape[-2:]
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    return (low[:, top:top + size, left:left + size],
            gt[:, top:top + size, left:left + size])


def epoch_batches(items, cfg: Config, epoch: int):
    """Shuffled batches of random crops; the generator depends only on (seed, epoch)."""
    rng = np.random.default_rng([cfg.seed, epoch])
    order = rng.permutation(len(items))
    for start in range(0, len(order), cfg.batch_size):
        lows, gts = [], []
        for idx in order[start:start + cfg.batch_size]:
            _, low, gt = items[idx]
            lo, g = random_crop(rng, low, gt, cfg.crop)
            lows.append(lo)
            gts.append(g)
        yield np.stack(lows).astype(np.float32), np.stack(gts).astype(np.float32)


@dataclass
class TrainResult:
    model: DPFNet
    adam: AdamState
    extractor: FrozenFeatureExtractor
    history: list[dict] = field(default_factory=list)
    checkpoint: Path | None = None


def _append_metrics(path: Path, row: dict) -> None:
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(METRICS_HEADER)
        writer.writerow([row["epoch"], f"{row['lr']:.6g}"]
                        + [f"{row[k]:.8g}" for k in METRICS_HEADER[2:]])


def train(items, cfg: Config, out_dir: str | Path | None = None,
          resume: str | Path | None = None, epochs: int | None = None,
          plot: bool = True) -> TrainResult:
    """Train on (name, low, gt) triples of [3,H,W] arrays in [0, 1].

    ``epochs`` caps how many epochs this call runs (the schedule still uses
    ``cfg.epochs``).  With ``out_dir`` set, a metrics CSV is appended each
    epoch and a checkpoint is written every ``cfg.checkpoint_every`` epochs
    and at the end.
    """
    items = list(items)
    if not items:
        raise ValueError("training needs at least one image pair")
    smallest = min(min(low.shape[-2:]) for _, low, _ in items)
    if cfg.crop > smallest:
        raise ValueError(f"crop {cfg.crop} exceeds smallest image dimension {smallest}")

    model = DPFNet(cfg)
    params = model.named_parameters()
    extractor = FrozenFeatureExtractor.from_config(cfg)
    weights = LossWeights(cfg.lambda_a, cfg.lambda_b)
    adam = AdamState.fresh(params)
    start = 0
    if resume is not None:
        entries = read_entries(resume)
        load_model_state(model, entries)
        adam = AdamState.from_entries(entries, params)
        start = int(entries.get("meta.epoch", 0))
        log.info("resumed from %s at epoch %d", resume, start)

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    stop = cfg.epochs if epochs is None else min(cfg.epochs, start + epochs)
    result = TrainResult(model, adam, extractor)

    epoch = start
    for epoch in range(start, stop):
        lr = lr_at_epoch(epoch, cfg)
        sums = dict.fromkeys(METRICS_HEADER[2:6], 0.0)
        psnrs, batches = [], 0
        for low, gt in epoch_batches(items, cfg, epoch):
            with GradTape() as tape:
                pred = model(Tensor(low))
                terms = loss_terms(pred, Tensor(gt), weights, extractor, cfg.ssim_window)
            grads = tape.backward(terms.total)
            adam_step(params, grads, adam, lr)
            for k, v in terms.values().items():
                sums[k] += v
            psnrs.extend(psnr(p, g) for p, g in zip(pred.data, gt))
            batches += 1
        row = {"epoch": epoch + 1, "lr": lr, **{k: v / batches for k, v in sums.items()},
               "train_psnr": float(np.mean(psnrs))}
        result.history.append(row)
        log.info("epoch %d lr %.3g loss %.5f psnr %.2f", row["epoch"], lr,
                 row["loss_total"], row["train_psnr"])
        if out is not None:
            _append_metrics(out / METRICS_NAME, row)
            if (epoch + 1) % cfg.checkpoint_every == 0 and epoch + 1 < stop:
                save_checkpoint(out / CHECKPOINT_NAME, model, cfg, adam, epoch + 1)

    if out is not None:
        result.checkpoint = out / CHECKPOINT_NAME
        save_checkpoint(result.checkpoint, model, cfg, adam, stop)
        if plot and result.history:
            from .plotting import plot_training_history, read_metrics

            plot_training_history(read_metrics(out / METRICS_NAME), out / "training.png")
    return result


def train_set_psnr(model, items) -> tuple[float, float]:
    """(mean PSNR of enhanced outputs, mean PSNR of the raw low inputs) against gt."""
    from .metrics import enhance

    enhanced = [psnr(enhance(model, low), gt) for _, low, gt in items]
    baseline = [psnr(low, gt) for _, low, gt in items]
    return float(np.mean(enhanced)), float(np.mean(baseline))
