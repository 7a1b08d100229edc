"""Minimal module/parameter containers on top of :mod:`dpfnet.tensor`."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


def uniform_kernel(rng: np.random.Generator, shape: tuple[int, ...], gain: float = 1.0) -> np.ndarray:
    """U(-b, b) with b = gain / sqrt(fan_in); fan_in = C * kh * kw."""
    fan_in = int(np.prod(shape[1:]))
    bound = gain / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(T.DEFAULT_DTYPE)


class Module:
    """Base class; parameters are discovered by walking attributes in definition order."""

    def _children(self) -> Iterator[tuple[str, object]]:
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            if isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Module, Tensor)):
                        yield f"{key}.{i}", item
            elif isinstance(value, (Module, Tensor)):
                yield key, value

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for key, value in self._children():
            name = f"{prefix}{key}"
            if isinstance(value, Module):
                out.update(value.named_parameters(prefix=name + "."))
            elif value.requires_grad:
                out[name] = value
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = [k for k in params if k not in state]
        if missing:
            raise KeyError(f"missing parameters: {', '.join(missing)}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"shape mismatch for {k}: expected {p.shape}, got {state[k].shape}")
            p.data = np.array(state[k], dtype=p.dtype)

    def astype(self, dtype) -> "Module":
        """Cast every parameter in place (used for float64 gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int = 3, dilation: int = 1,
                 rng: np.random.Generator | None = None, gain: float = 1.0):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dilation = dilation
        self.weight = Tensor(uniform_kernel(rng, (c_out, c_in, k, k), gain), requires_grad=True)
        self.bias = Tensor(np.zeros(c_out, dtype=T.DEFAULT_DTYPE), requires_grad=True)

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, self.dilation)

    def zero_(self) -> "Conv2d":
        self.weight.data[...] = 0
        self.bias.data[...] = 0
        return self

    def identity_(self) -> "Conv2d":
        """Centre-tap kernel mapping channel i to channel i % c_in, zero bias."""
        o, c, kh, kw = self.weight.shape
        self.zero_()
        for i in range(o):
            self.weight.data[i, i % c, kh // 2, kw // 2] = 1
        return self
