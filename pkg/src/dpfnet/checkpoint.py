"""Named-tensor binary container used for checkpoints and extractor weights.

Layout (all integers little-endian)::

    b"DPFN"  u32 version  u32 entry_count
    per entry:  u32 name_len  name (UTF-8)  u32 rank  u64 extent * rank
                float32 values, row-major, little-endian

A checkpoint stores model parameters under ``model.*``, Adam moments under
``adam.m.*`` / ``adam.v.*`` with the step count in ``adam.t``, and the
architecture plus completed epoch count under ``meta.*`` so that inference
can rebuild the network without a config file.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .config import ABLATIONS, Config

MAGIC = b"DPFN"
VERSION = 1

_META_INT_KEYS = ("pfm_width", "mdcm_width", "afm_width", "dilation_a", "dilation_b", "seed")


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


def atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_entries(entries: dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, arr in entries.items():
        arr = np.asarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(chunks)


def decode_entries(buf: bytes) -> dict[str, np.ndarray]:
    view = memoryview(buf)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError(f"truncated file: needed {n} bytes at offset {pos}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointVersionError("bad magic bytes: not a DPFN container")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointVersionError(f"unsupported format version {version} (expected {VERSION})")
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        n = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(take(4 * n), dtype="<f4").astype(np.float32).reshape(shape)
        entries[name] = data
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes after last entry")
    return entries


def write_entries(path: str | Path, entries: dict[str, np.ndarray]) -> None:
    atomic_write_bytes(path, encode_entries(entries))


def read_entries(path: str | Path) -> dict[str, np.ndarray]:
    return decode_entries(Path(path).read_bytes())


def _meta(cfg: Config, epoch: int) -> dict[str, np.ndarray]:
    meta = {f"meta.{k}": np.float32(getattr(cfg, k)) for k in _META_INT_KEYS}
    meta["meta.ablation"] = np.float32(ABLATIONS.index(cfg.ablation))
    meta["meta.leaky_slope"] = np.float32(cfg.leaky_slope)
    meta["meta.rb_leaky"] = np.float32(cfg.rb_activation == "leaky_relu")
    meta["meta.epoch"] = np.float32(epoch)
    return meta


def save_checkpoint(path, model, cfg: Config, adam=None, epoch: int = 0) -> None:
    entries = dict(_meta(cfg, epoch))
    for name, value in model.state_dict().items():
        entries[f"model.{name}"] = value
    if adam is not None:
        entries.update(adam.state_entries())
    write_entries(path, entries)


def config_from_entries(entries: dict[str, np.ndarray], base: Config | None = None) -> Config:
    base = base if base is not None else Config()
    try:
        changes = {k: int(entries[f"meta.{k}"]) for k in _META_INT_KEYS}
        changes["ablation"] = ABLATIONS[int(entries["meta.ablation"])]
        changes["leaky_slope"] = float(entries["meta.leaky_slope"])
        changes["rb_activation"] = "leaky_relu" if entries["meta.rb_leaky"] else "relu"
    except KeyError as exc:
        raise CheckpointError(f"checkpoint lacks architecture entry {exc.args[0]}") from None
    changes["leaky_slope"] = round(changes["leaky_slope"], 6)
    return base.replace(**changes)


def _missing_groups(missing: list[str], present: list[str]) -> list[str]:
    groups = []
    for name in missing:
        parts = name.split(".")
        for i in range(1, len(parts) + 1):
            prefix = ".".join(parts[:i])
            if not any(p == prefix or p.startswith(prefix + ".") for p in present):
                break
        if prefix not in groups:
            groups.append(prefix)
    return groups


def load_model_state(model, entries: dict[str, np.ndarray]) -> None:
    """Copy ``model.*`` entries into ``model``, checking names and shapes first."""
    stored = {k[len("model."):]: v for k, v in entries.items() if k.startswith("model.")}
    params = model.named_parameters()
    missing = [k for k in params if k not in stored]
    unexpected = [k for k in stored if k not in params]
    if missing or unexpected:
        msg = []
        if missing:
            msg.append("missing parameter group(s): " + ", ".join(_missing_groups(missing, list(stored))))
        if unexpected:
            msg.append("unexpected parameter group(s): " + ", ".join(_missing_groups(unexpected, list(params))))
        raise CheckpointShapeError("; ".join(msg))
    for name, p in params.items():
        if stored[name].shape != p.shape:
            raise CheckpointShapeError(
                f"shape mismatch for {name}: model {p.shape}, checkpoint {stored[name].shape}"
            )
    for name, p in params.items():
        p.data = stored[name].astype(p.dtype, copy=True)


def load_checkpoint(path, base: Config | None = None):
    """Rebuild the model stored at ``path``; returns (model, cfg, entries)."""
    from .model import DPFNet

    entries = read_entries(path)
    cfg = config_from_entries(entries, base)
    model = DPFNet(cfg.replace(init="uniform"))
    load_model_state(model, entries)
    return model, cfg, entries
