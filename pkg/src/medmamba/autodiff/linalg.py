"""Matrix exponential by scaling-and-squaring of a truncated Taylor series."""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor

MATRIX_EXP_CAP = 256
_TAYLOR_TOL = 1e-16
_MAX_TERMS = 60


def expm_array(m: np.ndarray, cap: int = MATRIX_EXP_CAP) -> np.ndarray:
    """``exp(m)`` for a (batch of) square matrices over the last two axes."""
    m = np.asarray(m)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ShapeError(f"matrix_exp needs square trailing axes, got {m.shape}")
    n = m.shape[-1]
    if n > cap:
        raise ValueError(f"matrix size {n} exceeds the cap of {cap}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix_exp of a non-finite matrix")
    norm = float(np.abs(m).sum(axis=-1).max()) if m.size else 0.0
    squarings = 0
    if norm > 0.5:
        squarings = int(np.ceil(np.log2(norm / 0.5)))
    scaled = m / (2.0**squarings)
    eye = np.broadcast_to(np.eye(n, dtype=m.dtype), m.shape)
    result = eye.copy()
    term = eye.copy()
    for k in range(1, _MAX_TERMS):
        term = term @ scaled / k
        result = result + term
        if np.abs(term).sum(axis=-1).max() < _TAYLOR_TOL:
            break
    for _ in range(squarings):
        result = result @ result
    return result


def matrix_exp(m: Tensor, cap: int = MATRIX_EXP_CAP) -> Tensor:
    """Differentiable matrix exponential.

    The adjoint of the Taylor series term by term (the product rule on each
    ``M^k``) is the upper-right block of ``exp([[M^T, G], [0, M^T]])``, which
    reuses the same series evaluation.
    """
    md = m.data
    out = expm_array(md, cap)
    n = md.shape[-1]

    def backward(g):
        mt = np.swapaxes(md, -1, -2)
        # the derivative is linear in g; normalize it so g never drives the squaring count
        scale = float(np.abs(g).max()) or 1.0
        block = np.zeros(md.shape[:-2] + (2 * n, 2 * n), dtype=md.dtype)
        block[..., :n, :n] = mt
        block[..., n:, n:] = mt
        block[..., :n, n:] = g / scale
        return (expm_array(block, 2 * cap)[..., :n, n:] * scale,)

    return Tensor._make(out, (m,), backward, "matrix_exp")
