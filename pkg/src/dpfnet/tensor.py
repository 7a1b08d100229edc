"""Dense float tensors with a tape-based reverse-mode autodiff.

Every differentiable op computes its forward value with numpy and, when a
:class:`GradTape` is active and at least one input is tracked, records a
closure that maps the output gradient to input gradients.  ``backward``
replays those closures in reverse order.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_state = threading.local()


class NumericError(FloatingPointError):
    """Raised when a forward op produces NaN or Inf from finite inputs."""


class TapeError(RuntimeError):
    pass


def _tape_stack() -> list:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = _state.tapes = []
    return stack


def active_tape() -> "GradTape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A numpy array plus autodiff bookkeeping.

    ``requires_grad`` marks leaves whose gradient is wanted (parameters, or
    inputs under a gradient check).  Outputs of recorded ops are tracked too.
    """

    __slots__ = ("data", "requires_grad", "name", "_tape", "__weakref__")

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self._tape = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def __len__(self) -> int:
        return len(self.data)

    # arithmetic sugar; all route through the recorded functions below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if dtype is None and not isinstance(x, np.ndarray):
        dtype = DEFAULT_DTYPE
    return Tensor(x, dtype=dtype)


class GradTape:
    """Ordered record of differentiable ops executed inside its context.

    Usage::

        with GradTape() as tape:
            loss = model(x)
        grads = tape.backward(loss)

    A tape is single-owner and is consumed by ``backward``.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._consumed = False

    def __enter__(self) -> "GradTape":
        if self._consumed:
            raise TapeError("tape already consumed")
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self._records)

    def _push(self, out: Tensor, parents: tuple[Tensor, ...], fn: Callable) -> None:
        out._tape = self
        self._records.append((out, parents, fn))

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        return backward(loss, self)


def backward(loss: Tensor, tape: GradTape) -> dict[Tensor, np.ndarray]:
    """Gradients of a scalar ``loss`` for every ``requires_grad`` leaf.

    Returns a dict keyed by the leaf tensors themselves.  The tape is
    cleared afterwards.
    """
    if tape._consumed:
        raise TapeError("tape already consumed")
    if loss.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._tape is not tape:
        raise TapeError("loss was not produced under this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for out, parents, fn in reversed(tape._records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        parent_grads = fn(g)
        for parent, pg in zip(parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if parent._tape is None:
                leaves[id(parent)] = parent
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg

    result = {leaves[k]: g for k, g in grads.items() if k in leaves}
    tape._records.clear()
    tape._consumed = True
    return result


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"{op} produced non-finite values")


def _make(data: np.ndarray, parents: Sequence[Tensor], fn: Callable, op: str) -> Tensor:
    """Wrap an op result and record it on the active tape when needed."""
    _check_finite(data, op)
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape._push(out, tuple(parents), fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return as_tensor(a), as_tensor(b)


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data

    def fn(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return _make(out, (a, b), fn, "div")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def power(a: Tensor, exponent: float) -> Tensor:
    out = a.data ** exponent
    return _make(out, (a,), lambda g: (g * exponent * a.data ** (exponent - 1),), "power")


def square(a: Tensor) -> Tensor:
    return _make(a.data * a.data, (a,), lambda g: (2 * g * a.data,), "square")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g / (2 * out),), "sqrt")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def atan2(y: Tensor, x: Tensor, guard: float = 0.0) -> Tensor:
    """Angle of (x, y) in (-pi, pi].

    ``guard`` is added in quadrature to the radius in the derivative so the
    gradient stays bounded at the origin.
    """
    y, x = _pair(y, x)
    out = np.arctan2(y.data, x.data)
    pi = np.asarray(np.pi, dtype=out.dtype)
    # -pi only arises from a signed-zero or vanishing imaginary part; fold it.
    out = np.where(out <= -pi, pi, out)

    def fn(g):
        r2 = x.data * x.data + y.data * y.data + guard * guard
        r2 = np.where(r2 == 0, 1, r2)
        return g * x.data / r2, -g * y.data / r2

    return _make(out, (y, x), fn, "atan2")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.data >= 0
    scale = np.where(mask, 1, slope).astype(x.dtype)
    return _make(x.data * scale, (x,), lambda g: (g * scale,), "leaky_relu")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def activation(x: Tensor, kind: str = "leaky_relu", slope: float = 0.2) -> Tensor:
    if kind == "leaky_relu":
        if not 0 < slope < 1:
            raise ValueError(f"leaky_relu slope must be in (0, 1), got {slope}")
        return leaky_relu(x, slope)
    if kind == "relu":
        return relu(x)
    if kind == "identity":
        return x
    raise ValueError(f"unknown activation {kind!r}")


# ------------------------------------------------------------ shape and reduce


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out), (a,), fn, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    count = a.size // max(np.asarray(out).size, 1) if axis is not None else a.size

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).astype(a.dtype),)

    return _make(np.asarray(out, dtype=a.dtype), (a,), fn, "mean")


def reshape(a: Tensor, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def getitem(a: Tensor, index) -> Tensor:
    def fn(g):
        full = np.zeros_like(a.data)
        if _needs_add_at(index):
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return _make(np.array(a.data[index]), (a,), fn, "getitem")


def _needs_add_at(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ValueError("concat needs at least one part")
    ref = parts[0].shape
    for p in parts[1:]:
        if p.ndim != len(ref) or any(
            p.shape[i] != ref[i] for i in range(len(ref)) if i != axis % len(ref)
        ):
            raise ValueError(f"concat shape mismatch: {ref} vs {p.shape} along axis {axis}")
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(np.concatenate([p.data for p in parts], axis=axis), parts, fn, "concat")


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    """Stack NCHW maps along the channel axis, in argument order."""
    for p in parts:
        if p.ndim != 4:
            raise ValueError(f"concat_channels expects NCHW tensors, got shape {p.shape}")
    return concat(parts, axis=1)


def split(a: Tensor, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    if sum(sizes) != a.shape[axis]:
        raise ValueError(f"split sizes {list(sizes)} do not cover extent {a.shape[axis]}")
    out, start = [], 0
    for n in sizes:
        index = [slice(None)] * a.ndim
        index[axis] = slice(start, start + n)
        out.append(getitem(a, tuple(index)))
        start += n
    return out


def softmax_channels(x: Tensor) -> Tensor:
    """Softmax over axis 1 of an NKHW map, stabilised by max subtraction."""
    if x.ndim != 4 or x.shape[1] < 1:
        raise ValueError(f"softmax_channels expects [N,K,H,W] with K >= 1, got {x.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def fn(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return _make(out, (x,), fn, "softmax_channels")


# ----------------------------------------------------------------- convolution


def _same_pad(k: int, dilation: int) -> int:
    return dilation * (k - 1) // 2


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, dilation: int = 1) -> Tensor:
    """Same-size 2-D cross-correlation with dilated taps.

    x is [N,C,H,W], weight [O,C,kh,kw] with odd kh, kw, bias [O].  Zero
    padding of ``dilation*(k-1)/2`` on each side keeps H and W unchanged.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input and kernel, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    o, ci, kh, kw = weight.shape
    if ci != c:
        raise ValueError(f"conv2d channel mismatch: input has {c}, kernel expects {ci}")
    if not isinstance(dilation, (int, np.integer)) or dilation < 1:
        raise ValueError(f"dilation must be a positive integer, got {dilation!r}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d kernel extents must be odd, got {kh}x{kw}")

    ph, pw = _same_pad(kh, dilation), _same_pad(kw, dilation)
    taps = [(i * dilation, j * dilation) for i in range(kh) for j in range(kw)]
    k = len(taps)
    # channel-major im2col: cols[c, t, n, h, w] so forward and both adjoints are plain GEMMs
    xt = x.data.transpose(1, 0, 2, 3)
    if k == 1:
        cols = np.ascontiguousarray(xt).reshape(c, n * h * w)
    else:
        xp = np.pad(xt, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        cols = np.empty((c, k, n, h, w), dtype=x.dtype)
        for t, (a, b) in enumerate(taps):
            cols[:, t] = xp[:, :, a:a + h, b:b + w]
        cols = cols.reshape(c * k, n * h * w)
    wmat = weight.data.reshape(o, c * k)
    out = wmat @ cols
    if bias is not None:
        out += bias.data.reshape(o, 1)
    out = np.ascontiguousarray(out.reshape(o, n, h, w).transpose(1, 0, 2, 3))

    def fn(g):
        g2 = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(o, n * h * w)
        gw = gb = gx = None
        if weight.requires_grad:
            gw = (g2 @ cols.T).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=1)
        if x.requires_grad:
            gcols = wmat.T @ g2
            if k == 1:
                gx = gcols.reshape(c, n, h, w).transpose(1, 0, 2, 3)
            else:
                gcols = gcols.reshape(c, k, n, h, w)
                gxp = np.zeros((c, n, h + 2 * ph, w + 2 * pw), dtype=g.dtype)
                for t, (a, b) in enumerate(taps):
                    gxp[:, :, a:a + h, b:b + w] += gcols[:, t]
                gx = gxp[:, :, ph:ph + h, pw:pw + w].transpose(1, 0, 2, 3)
            gx = np.ascontiguousarray(gx)
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _make(out, parents, fn, "conv2d")


def avg_pool2d(x: Tensor, k: int = 2) -> Tensor:
    """Non-overlapping k x k mean pooling; trailing rows/cols that don't fill a window are dropped."""
    n, c, h, w = x.shape
    ho, wo = h // k, w // k
    if ho == 0 or wo == 0:
        raise ValueError(f"avg_pool2d window {k} larger than input {h}x{w}")
    view = x.data[:, :, : ho * k, : wo * k].reshape(n, c, ho, k, wo, k)
    out = view.mean(axis=(3, 5))

    def fn(g):
        gx = np.zeros_like(x.data)
        up = np.repeat(np.repeat(g / (k * k), k, axis=2), k, axis=3)
        gx[:, :, : ho * k, : wo * k] = up
        return (gx,)

    return _make(out, (x,), fn, "avg_pool2d")


def filter_valid(x: Tensor, taps: np.ndarray) -> Tensor:
    """Separable depthwise filtering of NCHW planes with no padding.

    The same 1-D ``taps`` run along H then W; output shrinks by len(taps)-1
    on each spatial axis.
    """
    taps = np.asarray(taps, dtype=x.dtype)
    k = len(taps)
    n, c, h, w = x.shape
    if h < k or w < k:
        raise ValueError(f"filter window {k} larger than input {h}x{w}")
    ho, wo = h - k + 1, w - k + 1
    rows = sum(taps[i] * x.data[:, :, i:i + ho, :] for i in range(k))
    out = sum(taps[j] * rows[:, :, :, j:j + wo] for j in range(k))

    def fn(g):
        grows = np.zeros((n, c, ho, w), dtype=g.dtype)
        for j in range(k):
            grows[:, :, :, j:j + wo] += taps[j] * g
        gx = np.zeros(x.shape, dtype=g.dtype)
        for i in range(k):
            gx[:, :, i:i + ho, :] += taps[i] * grows
        return (gx,)

    return _make(out, (x,), fn, "filter_valid")


@contextmanager
def default_dtype(dtype):
    """Temporarily change the dtype used for new parameters and constants."""
    global DEFAULT_DTYPE
    prev = DEFAULT_DTYPE
    DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        DEFAULT_DTYPE = prev
