"""2-D discrete Fourier analysis on NCHW tensors.

The transform is a recursive mixed-radix FFT for lengths whose prime
factors are all in {2, 3, 5}; any other length goes through Bluestein's
chirp-z reformulation, which reuses the mixed-radix path at a padded
power-of-two length.  Forward transforms are unnormalized and inverses
carry 1/(MN).  Arithmetic is done in complex128 regardless of input dtype;
results are stored back in the input's real dtype.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tensor import Tensor, _make, as_tensor, atan2, concat, getitem, mul

AMPLITUDE_GUARD = 1e-8
NAIVE_MAX_PIXELS = 128 * 128
_RADICES = (4, 2, 3, 5)


# ------------------------------------------------------------------ raw FFT


@lru_cache(maxsize=None)
def _roots(n: int) -> np.ndarray:
    """exp(-2*pi*i*j/n) for j in [0, n), exact at the quarter turns."""
    j = np.arange(n)
    w = np.exp(-2j * np.pi * j / n)
    if n % 4 == 0:
        w[n // 4] = -1j
        w[3 * n // 4] = 1j
    if n % 2 == 0:
        w[n // 2] = -1
    w[0] = 1
    return w


@lru_cache(maxsize=None)
def _stage(n: int, p: int) -> tuple[np.ndarray, np.ndarray]:
    m = n // p
    roots = _roots(n)
    twiddle = roots[(np.arange(p)[:, None] * np.arange(m)[None, :]) % n]
    small = _roots(p)[(np.arange(p)[:, None] * np.arange(p)[None, :]) % p]
    return twiddle, small


def _is_smooth(n: int) -> bool:
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


def _mixed_radix(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    if n == 1:
        return x
    p = next(r for r in _RADICES if n % r == 0)
    m = n // p
    lead = x.shape[:-1]
    # sub[..., r, k] = x[..., k*p + r]
    sub = x.reshape(*lead, m, p).swapaxes(-1, -2)
    y = _mixed_radix(sub)
    twiddle, small = _stage(n, p)
    z = np.matmul(small, y * twiddle)
    return z.reshape(*lead, n)


@lru_cache(maxsize=None)
def _chirp(n: int) -> tuple[np.ndarray, np.ndarray, int]:
    k = np.arange(n)
    w = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    size = 1
    while size < 2 * n - 1:
        size *= 2
    b = np.zeros(size, dtype=complex)
    b[:n] = np.conj(w)
    b[size - n + 1:] = np.conj(w[1:][::-1])
    return w, _mixed_radix(b), size


def _bluestein(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    w, b_hat, size = _chirp(n)
    a = np.zeros(x.shape[:-1] + (size,), dtype=complex)
    a[..., :n] = x * w
    prod = _mixed_radix(a) * b_hat
    conv = np.conj(_mixed_radix(np.conj(prod))) / size
    return w * conv[..., :n]


def fft_last(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unnormalized DFT along the last axis (sign +i when ``inverse``)."""
    x = np.asarray(x, dtype=complex)
    if inverse:
        return np.conj(fft_last(np.conj(x)))
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    return _mixed_radix(x) if _is_smooth(n) else _bluestein(x)


def fft2_raw(z: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unnormalized 2-D DFT over the last two axes."""
    z = fft_last(z, inverse)
    z = fft_last(np.swapaxes(z, -1, -2), inverse)
    return np.swapaxes(z, -1, -2)


def hermitian_project(z: np.ndarray) -> np.ndarray:
    """Average z with its conjugate mirror so real-input symmetry holds exactly."""
    mirror = np.roll(np.flip(z, axis=(-2, -1)), shift=(1, 1), axis=(-2, -1))
    return 0.5 * (z + np.conj(mirror))


# --------------------------------------------------------------- tensor types


@dataclass
class ComplexTensor:
    re: Tensor
    im: Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ValueError(f"re/im shape mismatch: {self.re.shape} vs {self.im.shape}")

    @property
    def shape(self):
        return self.re.shape

    def to_numpy(self) -> np.ndarray:
        return self.re.data.astype(np.float64) + 1j * self.im.data.astype(np.float64)

    @classmethod
    def from_numpy(cls, z: np.ndarray, dtype=np.float32) -> "ComplexTensor":
        return cls(Tensor(z.real, dtype=dtype), Tensor(z.imag, dtype=dtype))


@dataclass
class Spectrum:
    amplitude: Tensor
    phase: Tensor


def _spectral_op(parts: tuple[Tensor, ...], inverse: bool, real_input: bool) -> ComplexTensor:
    dtype = parts[0].dtype
    z = parts[0].data.astype(np.float64) if real_input else (
        parts[0].data.astype(np.float64) + 1j * parts[1].data.astype(np.float64)
    )
    m, n = z.shape[-2], z.shape[-1]
    out = fft2_raw(z, inverse)
    if inverse:
        out = out / (m * n)
    elif real_input:
        out = hermitian_project(out)
    packed = np.stack([out.real, out.imag]).astype(dtype)

    def fn(g):
        gz = g[0].astype(np.float64) + 1j * g[1].astype(np.float64)
        # adjoint of the unnormalized DFT is MN * inverse DFT, and vice versa
        if inverse:
            gx = fft2_raw(gz, inverse=False) / (m * n)
        else:
            gx = fft2_raw(gz, inverse=True)
        if real_input:
            return (gx.real.astype(dtype),)
        return gx.real.astype(dtype), gx.imag.astype(dtype)

    stacked = _make(packed, parts, fn, "ifft2" if inverse else "fft2")
    return ComplexTensor(getitem(stacked, 0), getitem(stacked, 1))


def fft2(x) -> ComplexTensor:
    """Forward 2-D DFT of every trailing H x W plane of a tensor.

    Accepts a real :class:`Tensor` or a :class:`ComplexTensor`.  Real inputs
    get their spectrum projected onto exact conjugate symmetry.
    """
    if isinstance(x, ComplexTensor):
        return _spectral_op((x.re, x.im), inverse=False, real_input=False)
    return _spectral_op((as_tensor(x),), inverse=False, real_input=True)


def ifft2(z: ComplexTensor) -> ComplexTensor:
    """Inverse 2-D DFT with 1/(MN) normalization."""
    return _spectral_op((z.re, z.im), inverse=True, real_input=False)


def magnitude(re: Tensor, im: Tensor, guard: float = AMPLITUDE_GUARD) -> Tensor:
    """|re + j*im|; the guard enters only the derivative, sqrt(r^2 + guard^2)."""
    out = np.hypot(re.data, im.data)

    def fn(g):
        r = np.sqrt(re.data * re.data + im.data * im.data + guard * guard)
        r = np.where(r == 0, 1, r)
        return g * re.data / r, g * im.data / r

    return _make(out, (re, im), fn, "magnitude")


def polar_decompose(z: ComplexTensor, guard: float = AMPLITUDE_GUARD) -> Spectrum:
    return Spectrum(magnitude(z.re, z.im, guard), atan2(z.im, z.re, guard=guard))


def polar_compose(s: Spectrum) -> ComplexTensor:
    """amplitude * exp(j*phase); the exact inverse of :func:`polar_decompose`."""
    a, p = s.amplitude, s.phase
    cos = _make(np.cos(p.data), (p,), lambda g: (-g * np.sin(p.data),), "cos")
    sin = _make(np.sin(p.data), (p,), lambda g: (g * np.cos(p.data),), "sin")
    return ComplexTensor(mul(a, cos), mul(a, sin))


def cartesian_compose(a: Tensor, p: Tensor) -> ComplexTensor:
    """Combine two real planes as a + j*p (no exponential)."""
    if a.shape != p.shape:
        raise ValueError(f"cartesian_compose shape mismatch: {a.shape} vs {p.shape}")
    return ComplexTensor(a, p)


def spectrum_channels(z: ComplexTensor, guard: float = AMPLITUDE_GUARD) -> Tensor:
    """cat[amplitude, phase] along the channel axis."""
    s = polar_decompose(z, guard)
    return concat([s.amplitude, s.phase], axis=1)


def dft2_naive(x) -> np.ndarray:
    """Literal double-sum DFT over the last two axes; quadratic cost, test oracle only."""
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=complex)
    m, n = x.shape[-2:]
    if m * n > NAIVE_MAX_PIXELS:
        raise ValueError(f"naive DFT limited to {NAIVE_MAX_PIXELS} pixels per plane, got {m}x{n}")
    # F[u, v] = sum_{x,y} I[x, y] exp(-2 pi j (u x / M + v y / N))
    em = np.exp(-2j * np.pi * ((np.outer(np.arange(m), np.arange(m)) % m) / m))
    en = np.exp(-2j * np.pi * ((np.outer(np.arange(n), np.arange(n)) % n) / n))
    out = np.empty(x.shape, dtype=complex)
    for u in range(m):
        # every (v, x, y) term for this u: M*N*N products, M*M*N*N overall
        out[..., u, :] = np.matmul(x * em[u][:, None], en.T).sum(axis=-2)
    return out


def idft2_naive(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    m, n = z.shape[-2:]
    return np.conj(dft2_naive(np.conj(z))) / (m * n)
