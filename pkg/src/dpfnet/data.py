"""PNG image I/O, paired-dataset discovery and synthetic fixtures."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .checkpoint import atomic_write_bytes

log = logging.getLogger(__name__)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class ImageError(ValueError):
    pass


class DatasetError(ValueError):
    pass


def png_bit_depth(path: str | Path) -> int:
    with open(path, "rb") as fh:
        head = fh.read(33)
    if len(head) < 25 or head[:8] != PNG_SIGNATURE or head[12:16] != b"IHDR":
        raise ImageError(f"{path}: not a PNG file")
    return head[24]


def load_image(path: str | Path) -> np.ndarray:
    """Decode an 8-bit PNG to a float32 [3, H, W] array in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise ImageError(f"{path}: no such file")
    depth = png_bit_depth(path)
    if depth > 8:
        raise ImageError(f"{path}: unsupported bit depth {depth} (only 8-bit PNG is supported)")
    try:
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except OSError as exc:
        raise ImageError(f"{path}: decode failed: {exc}") from None
    return (rgb.astype(np.float32) / 255.0).transpose(2, 0, 1).copy()


def quantize(x: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and round half up to 8-bit."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.floor(x * 255.0 + 0.5).astype(np.uint8)


def encode_png(x: np.ndarray) -> bytes:
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[0] != 3:
        raise ImageError(f"expected a [3, H, W] image, got shape {x.shape}")
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(quantize(x).transpose(1, 2, 0))).save(buf, format="PNG")
    return buf.getvalue()


def save_image(x: np.ndarray, path: str | Path) -> None:
    try:
        atomic_write_bytes(path, encode_png(x))
    except OSError as exc:
        raise ImageError(f"{path}: cannot write: {exc}") from None


def image_size(path: str | Path) -> tuple[int, int]:
    """(height, width) without decoding the pixels."""
    with Image.open(path) as img:
        w, h = img.size
    return h, w


@dataclass(frozen=True)
class DatasetPair:
    low_path: Path
    gt_path: Path

    @property
    def name(self) -> str:
        return self.low_path.name

    def load(self) -> tuple[np.ndarray, np.ndarray]:
        low, gt = load_image(self.low_path), load_image(self.gt_path)
        if low.shape != gt.shape:
            raise ImageError(f"{self.name}: low {low.shape[1:]} vs gt {gt.shape[1:]}")
        return low, gt


def discover_pairs(root: str | Path) -> list[DatasetPair]:
    """Match ``root/low/*.png`` with ``root/gt/*.png`` by filename."""
    root = Path(root)
    low_dir, gt_dir = root / "low", root / "gt"
    for d in (low_dir, gt_dir):
        if not d.is_dir():
            raise DatasetError(f"{root}: missing directory {d.name}/")
    low = {p.name: p for p in low_dir.iterdir() if p.suffix.lower() == ".png"}
    gt = {p.name: p for p in gt_dir.iterdir() if p.suffix.lower() == ".png"}
    for name in sorted(set(low) ^ set(gt), key=lambda s: s.encode()):
        side = "gt" if name in low else "low"
        log.warning("unmatched file %s (no %s/ counterpart); skipped", name, side)

    pairs = []
    for name in sorted(set(low) & set(gt), key=lambda s: s.encode()):
        pair = DatasetPair(low[name], gt[name])
        try:
            size_low, size_gt = image_size(pair.low_path), image_size(pair.gt_path)
        except OSError as exc:
            log.warning("unreadable pair %s: %s; skipped", name, exc)
            continue
        if size_low != size_gt:
            log.warning("dimension mismatch in pair %s: low %s vs gt %s; skipped",
                        name, size_low, size_gt)
            continue
        pairs.append(pair)
    if not pairs:
        raise DatasetError(f"{root}: no matched image pairs")
    return pairs


def load_pairs(pairs: list[DatasetPair]) -> list[tuple[str, np.ndarray, np.ndarray]]:
    """Decode every pair, skipping unreadable ones with a warning."""
    out = []
    for pair in pairs:
        try:
            low, gt = pair.load()
        except ImageError as exc:
            log.warning("skipping pair: %s", exc)
            continue
        out.append((pair.name, low, gt))
    if not out:
        raise DatasetError("all image pairs were unreadable")
    return out


def smooth_image(rng: np.random.Generator, size: int | tuple[int, int], components: int = 6) -> np.ndarray:
    """Random smooth RGB image in [0.05, 0.95] built from low-frequency cosines."""
    h, w = (size, size) if isinstance(size, int) else size
    yy, xx = np.meshgrid(np.arange(h) / h, np.arange(w) / w, indexing="ij")
    img = np.empty((3, h, w))
    for c in range(3):
        acc = np.zeros((h, w))
        for _ in range(components):
            fy, fx = rng.integers(0, 4, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            acc += rng.uniform(0.3, 1.0) * np.cos(2 * np.pi * (fy * yy + fx * xx) + phase)
        acc -= acc.min()
        img[c] = acc / max(acc.max(), 1e-12)
    return (0.05 + 0.9 * img).astype(np.float32)


def synthetic_pairs(n: int = 4, size: int | tuple[int, int] = 64, gamma: float = 2.2,
                    seed: int = 0) -> list[tuple[str, np.ndarray, np.ndarray]]:
    """Gamma-darkened (low = gt ** gamma) pairs of smooth random images."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        gt = smooth_image(rng, size)
        out.append((f"synth_{i:03d}.png", (gt ** gamma).astype(np.float32), gt))
    return out


def write_dataset(root: str | Path, items: list[tuple[str, np.ndarray, np.ndarray]]) -> Path:
    """Write (name, low, gt) triples under ``root/low`` and ``root/gt``."""
    root = Path(root)
    for name, low, gt in items:
        save_image(low, root / "low" / name)
        save_image(gt, root / "gt" / name)
    return root
