"""Real FFT pair built on an iterative radix-2 kernel with a Bluestein fallback.

Transforms operate along one axis of an arbitrary-rank array.  Power-of-two
lengths go straight through the radix-2 kernel; every other length is
re-expressed as a circular convolution (Bluestein's chirp-z identity) whose
padded length is a power of two.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, add, broadcast_shape, mul, sub


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _bitrev(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _complex_dtype(x: np.ndarray):
    return np.complex64 if x.dtype in (np.float32, np.complex64) else np.complex128


def _fft_pow2(x: np.ndarray, inverse: bool) -> np.ndarray:
    # transform axis 0; trailing axes are independent lanes kept contiguous
    n = x.shape[0]
    if n == 1:
        return x.copy()
    y = x[_bitrev(n)]
    rest = y.shape[1:]
    sign = 1.0 if inverse else -1.0
    expand = (None,) + (slice(None),) + (None,) * len(rest)
    m = 2
    while m <= n:
        half = m // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / m).astype(y.dtype)[expand]
        blocks = y.reshape((n // m, m) + rest)
        even = blocks[:, :half]
        odd = blocks[:, half:] * tw
        out = np.empty_like(blocks)
        np.add(even, odd, out=out[:, :half])
        np.subtract(even, odd, out=out[:, half:])
        y = out.reshape((n,) + rest)
        m *= 2
    return y


def _fft_bluestein(x: np.ndarray, inverse: bool) -> np.ndarray:
    n = x.shape[0]
    rest = x.shape[1:]
    k = np.arange(n)
    sign = 1.0 if inverse else -1.0
    # k^2 mod 2n keeps the chirp phase exact for long inputs
    chirp = np.exp(sign * 1j * np.pi * ((k * k) % (2 * n)) / n)
    m = 1 << (2 * n - 2).bit_length()
    col = (slice(None),) + (None,) * len(rest)
    a = np.zeros((m,) + rest, dtype=np.complex128)
    a[:n] = x * chirp[col]
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[m - n + 1 :] = np.conj(chirp[1:][::-1])
    fa = _fft_pow2(a, inverse=False)
    fb = _fft_pow2(b, inverse=False)
    conv = _fft_pow2(fa * fb[col], inverse=True) / m
    return (conv[:n] * chirp[col]).astype(x.dtype)


def _fft_axis0(x: np.ndarray, inverse: bool) -> np.ndarray:
    n = x.shape[0]
    if n < 1:
        raise ValueError("fft of an empty axis")
    if _is_pow2(n):
        return _fft_pow2(x, inverse)
    return _fft_bluestein(x, inverse)


def fft(x: np.ndarray, inverse: bool = False, axis: int = -1) -> np.ndarray:
    """Unnormalized complex DFT along ``axis`` (inverse uses ``e^{+i...}``)."""
    x = np.asarray(x)
    x = x.astype(_complex_dtype(x), copy=False)
    moved = np.ascontiguousarray(np.moveaxis(x, axis, 0))
    return np.moveaxis(_fft_axis0(moved, inverse), 0, axis)


def rfft_array(x: np.ndarray, axis: int = 0) -> np.ndarray:
    """Positive-frequency half spectrum, ``floor(T/2)+1`` bins along ``axis``."""
    x = np.asarray(x)
    t_len = x.shape[axis]
    full = fft(x, axis=axis)
    return np.take(full, np.arange(t_len // 2 + 1), axis=axis)


def irfft_array(z: np.ndarray, n: int, axis: int = 0) -> np.ndarray:
    """Real signal of length ``n`` whose half spectrum is ``z`` along ``axis``."""
    z = np.asarray(z)
    zm = np.moveaxis(z.astype(_complex_dtype(z), copy=False), axis, 0)
    f = zm.shape[0]
    if f != n // 2 + 1:
        raise ShapeError(f"{f} bins given, a length-{n} signal has {n // 2 + 1}")
    full = np.zeros((n,) + zm.shape[1:], dtype=zm.dtype)
    full[:f] = zm
    # imaginary parts of the self-conjugate bins carry no signal
    full[0] = full[0].real
    if n % 2 == 0:
        full[n // 2] = full[n // 2].real
    if n > 2:
        upper = (n - 1) // 2
        full[n - upper :] = np.conj(zm[1 : upper + 1][::-1])
    out = _fft_axis0(full, inverse=True).real / n
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True)
class ComplexPair:
    """Complex tensor stored as matching real and imaginary parts."""

    real: Tensor
    imag: Tensor

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise ShapeError(f"real {self.real.shape} and imag {self.imag.shape} differ")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.real.shape

    def to_numpy(self) -> np.ndarray:
        return self.real.data + 1j * self.imag.data


def rfft(x: Tensor, axis: int = 0) -> ComplexPair:
    axis = axis % x.ndim
    t_len = x.shape[axis]
    if t_len < 1:
        raise ShapeError("rfft of an empty axis")
    z = rfft_array(x.data, axis)
    dtype = x.dtype
    packed = np.stack([z.real, z.imag]).astype(dtype, copy=False)

    def backward(g):
        gz = np.moveaxis(g[0] + 1j * g[1], axis, 0)
        padded = np.zeros((t_len,) + gz.shape[1:], dtype=gz.dtype)
        padded[: gz.shape[0]] = gz
        gx = _fft_axis0(padded, inverse=True).real
        return (np.moveaxis(gx, 0, axis).astype(dtype),)

    both = Tensor._make(packed, (x,), backward, "rfft")
    return ComplexPair(both[0], both[1])


def irfft(z: ComplexPair, n: int, axis: int = 0) -> Tensor:
    zr, zi = z.real, z.imag
    axis = axis % zr.ndim
    f = zr.shape[axis]
    if f != n // 2 + 1:
        raise ShapeError(f"{f} bins given, a length-{n} signal has {n // 2 + 1}")
    dtype = zr.dtype
    out = irfft_array(zr.data + 1j * zi.data, n, axis).astype(dtype)
    weight = np.full(f, 2.0 / n)
    weight[0] = 1.0 / n
    if n % 2 == 0:
        weight[-1] = 1.0 / n
    shape = [1] * zr.ndim
    shape[axis] = f
    weight = weight.reshape(shape)

    def backward(g):
        gz = rfft_array(g, axis)
        gr = (gz.real * weight).astype(dtype)
        gi = (gz.imag * weight).astype(dtype)
        return gr, gi

    return Tensor._make(out, (zr, zi), backward, "irfft")


def complex_mul(z: ComplexPair, w: ComplexPair) -> ComplexPair:
    """Entrywise ``(a+bi)(c+di)`` with trailing-axis broadcasting of ``w``."""
    broadcast_shape(z.shape, w.shape)
    a, b, c, d = z.real, z.imag, w.real, w.imag
    return ComplexPair(sub(mul(a, c), mul(b, d)), add(mul(a, d), mul(b, c)))
