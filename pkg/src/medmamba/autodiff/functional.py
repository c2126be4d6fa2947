"""Neural-network primitives with hand-written adjoints."""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, matmul, unbroadcast

LN_EPS = 1e-5
SOFTPLUS_LINEAR_ABOVE = 30.0


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    return Tensor._make(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def silu(x: Tensor) -> Tensor:
    xd = x.data
    s = _sigmoid(xd)
    return Tensor._make(xd * s, (x,), lambda g: (g * s * (1.0 + xd * (1.0 - s)),), "silu")


def _softplus(x: np.ndarray) -> np.ndarray:
    big = x > SOFTPLUS_LINEAR_ABOVE
    safe = np.where(big, 0.0, x)
    return np.where(big, x, np.log1p(np.exp(safe)))


def softplus(x: Tensor) -> Tensor:
    xd = x.data
    return Tensor._make(_softplus(xd), (x,), lambda g: (g * _sigmoid(xd),), "softplus")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._make(out, (x,), backward, "softmax")


def activation(tag: str, x: Tensor) -> Tensor:
    table = {"sigmoid": sigmoid, "silu": silu, "softplus": softplus, "softmax-lastdim": softmax}
    try:
        return table[tag](x)
    except KeyError:
        raise ValueError(f"unknown activation {tag!r}") from None


def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (np.log(s) + m).squeeze(axis)
    soft = e / s
    return Tensor._make(out, (x,), lambda g: (np.expand_dims(g, axis) * soft,), "logsumexp")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean stabilized cross-entropy of ``logits[..., K]`` against integer labels."""
    labels = np.atleast_1d(np.asarray(labels))
    z = logits if logits.ndim == 2 else logits.reshape(1, -1)
    n, k = z.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.dtype.kind not in "iu" or np.any(labels < 0) or np.any(labels >= k):
        raise ValueError(f"labels must be integers in [0, {k})")
    m = z.data.max(axis=1, keepdims=True)
    e = np.exp(z.data - m)
    s = e.sum(axis=1, keepdims=True)
    lse = np.log(s[:, 0]) + m[:, 0]
    picked = z.data[np.arange(n), labels]
    loss = np.asarray(np.mean(lse - picked), dtype=z.dtype)
    soft = e / s
    onehot = np.zeros_like(soft)
    onehot[np.arange(n), labels] = 1.0

    def backward(g):
        return (g * (soft - onehot) / n,)

    return Tensor._make(loss, (z,), backward, "cross_entropy")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = matmul(x, weight)
    return out if bias is None else out + bias


def layernorm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then apply the affine map."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd, bd = gain.data, bias.data
    out = xhat * gd + bd
    d = xd.shape[-1]

    def backward(g):
        gx = None
        if x.requires_grad:
            gh = g * gd
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        gg = unbroadcast(g * xhat, gd.shape) if gain.requires_grad else None
        gb = unbroadcast(g, bd.shape) if bias.requires_grad else None
        return gx, gg, gb

    if d < 1:
        raise ShapeError("layernorm needs a non-empty last axis")
    return Tensor._make(out, (x, gain, bias), backward, "layernorm")


def conv1d_depthwise(x: Tensor, kernel: Tensor, mode: str = "same") -> Tensor:
    """Per-channel 1-D cross-correlation along the time axis of ``x[..., T, C]``.

    ``kernel`` has shape ``(C, k)``; the channel axis is the last axis of ``x``.
    ``same`` pads ``(k-1)/2`` zeros on both sides (k odd); ``causal`` pads
    ``k-1`` zeros on the past side only, so output ``t`` sees inputs ``<= t``.
    """
    xd = x.data
    t_len = xd.shape[-2]
    c, k = kernel.shape
    if xd.shape[-1] != c:
        raise ShapeError(f"kernel has {c} channels, input has {xd.shape[-1]}")
    if k < 1:
        raise ValueError("kernel width must be >= 1")
    if k > t_len:
        raise ValueError(f"kernel width {k} exceeds sequence length {t_len}")
    if mode == "same":
        if k % 2 == 0:
            raise ValueError("same-mode convolution needs an odd kernel width")
        left = (k - 1) // 2
    elif mode == "causal":
        left = k - 1
    else:
        raise ValueError(f"unknown conv mode {mode!r}")
    right = k - 1 - left
    widths = [(0, 0)] * xd.ndim
    widths[-2] = (left, right)
    xp = np.pad(xd, widths)
    wd = kernel.data
    out = np.zeros(xd.shape, dtype=np.result_type(xd, wd))
    for j in range(k):
        out += xp[..., j : j + t_len, :] * wd[:, j]

    def backward(g):
        gx = gk = None
        if x.requires_grad:
            gp = np.zeros(xp.shape, dtype=g.dtype)
            for j in range(k):
                gp[..., j : j + t_len, :] += g * wd[:, j]
            gx = gp[..., left : left + t_len, :]
        if kernel.requires_grad:
            gk = np.empty_like(wd)
            lead = tuple(range(g.ndim - 1))
            for j in range(k):
                gk[:, j] = (g * xp[..., j : j + t_len, :]).sum(axis=lead)
        return gx, gk

    return Tensor._make(out, (x, kernel), backward, "conv1d_depthwise")


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    if not training or rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return Tensor._make(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def constant_like(x: Tensor, value) -> Tensor:
    return as_tensor(np.full(x.shape, value, dtype=x.dtype))
