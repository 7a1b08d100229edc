"""Central finite-difference checks of tape gradients.

Run everything in float64: the tolerance (1e-3 relative) is meaningless at
32-bit precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import GradTape, Tensor


@dataclass
class GradCheckResult:
    name: str
    rel_error: float
    checked: int

    def ok(self, rtol: float = 1e-3) -> bool:
        return self.rel_error < rtol


def numeric_grad(f: Callable[[], Tensor], t: Tensor, index: tuple, eps: float) -> float:
    old = t.data[index]
    t.data[index] = old + eps
    up = f().item()
    t.data[index] = old - eps
    down = f().item()
    t.data[index] = old
    return (up - down) / (2 * eps)


def gradcheck(f: Callable[[], Tensor], inputs: Sequence[Tensor] | dict[str, Tensor],
              eps: float = 1e-6, max_entries: int = 24, seed: int = 0) -> list[GradCheckResult]:
    """Compare analytic and numeric gradients of scalar ``f()`` for each input.

    ``f`` is re-evaluated with each perturbed entry; ``inputs`` must be
    float64 leaves with ``requires_grad`` set.  Up to ``max_entries`` entries
    per tensor are sampled.  The error per tensor is
    ``||analytic - numeric|| / max(||analytic||, ||numeric||)`` over the
    sampled entries.
    """
    named = dict(inputs) if isinstance(inputs, dict) else {f"input{i}": t for i, t in enumerate(inputs)}
    for name, t in named.items():
        if t.dtype != np.float64:
            raise TypeError(f"gradcheck needs float64 inputs; {name} is {t.dtype}")
        if not t.requires_grad:
            raise ValueError(f"{name} does not require grad")

    with GradTape() as tape:
        out = f()
    grads = tape.backward(out)

    rng = np.random.default_rng(seed)
    results = []
    for name, t in named.items():
        analytic = grads.get(t, np.zeros_like(t.data))
        flat = rng.permutation(t.size)[:max_entries]
        idx = [np.unravel_index(i, t.shape) for i in flat]
        a = np.array([analytic[i] for i in idx])
        n = np.array([numeric_grad(f, t, i, eps) for i in idx])
        scale = max(np.linalg.norm(a), np.linalg.norm(n))
        err = 0.0 if scale == 0 else float(np.linalg.norm(a - n) / scale)
        results.append(GradCheckResult(name, err, len(idx)))
    return results


def worst(results: list[GradCheckResult]) -> GradCheckResult:
    return max(results, key=lambda r: r.rel_error)
