"""Recurrence kernels with a compiled backend and a pure-Python fallback.

The compiled extension ``_scan`` is used when it imports; setting the
environment variable ``MEDMAMBA_PURE_PYTHON=1`` forces the numpy fallback.
``BACKEND`` names the one in use.
"""
from __future__ import annotations

import os

import numpy as np

from . import _scan_py

_compiled = None
if os.environ.get("MEDMAMBA_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _scan as _compiled  # type: ignore[no-redef]
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def _impl(backend: str | None):
    name = backend or BACKEND
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled scan extension is not available")
        return _compiled
    if name == "python":
        return _scan_py
    raise ValueError(f"unknown backend {name!r}")


def _prep(*arrays):
    dtype = np.result_type(*arrays)
    return [np.ascontiguousarray(x, dtype=dtype) for x in arrays]


def sequential_scan(a: np.ndarray, b: np.ndarray, backend: str | None = None) -> np.ndarray:
    """States of ``x_t = a_t * x_{t-1} + b_t`` with ``x_{-1} = 0``; layout (lanes, T, N)."""
    a, b = _prep(a, b)
    out = np.empty_like(b)
    if b.shape[1] > 0:
        _impl(backend).scan_forward(a, b, out)
    return out


def sequential_scan_backward(a, states, grad_out, backend: str | None = None):
    """Adjoints ``(d/da, d/db)`` via the reverse-time recurrence."""
    a, states, grad_out = _prep(a, states, grad_out)
    grad_a = np.empty_like(a)
    grad_b = np.empty_like(a)
    if a.shape[1] > 0:
        _impl(backend).scan_backward(a, states, grad_out, grad_a, grad_b)
    return grad_a, grad_b


def parallel_scan(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same recurrence via a work-efficient (up-sweep / down-sweep) tree scan.

    Elements are pairs ``(a_t, b_t)`` composed as
    ``(a2, b2) o (a1, b1) = (a2 * a1, a2 * b1 + b2)``.  The time axis is padded
    with identity pairs ``(1, 0)`` to a power of two.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    lanes, steps, width = b.shape
    if steps == 0:
        return b.copy()
    size = 1 << (steps - 1).bit_length()
    dtype = np.result_type(a, b)
    sa = np.ones((lanes, size, width), dtype=dtype)
    sb = np.zeros((lanes, size, width), dtype=dtype)
    sa[:, :steps] = a
    sb[:, :steps] = b
    # up-sweep: each right child absorbs its left sibling's aggregate
    stride = 2
    while stride <= size:
        left = slice(stride // 2 - 1, None, stride)
        right = slice(stride - 1, None, stride)
        la, lb = sa[:, left].copy(), sb[:, left].copy()
        sb[:, right] = sa[:, right] * lb + sb[:, right]
        sa[:, right] = sa[:, right] * la
        stride *= 2
    # down-sweep to exclusive prefixes
    sa[:, size - 1] = 1
    sb[:, size - 1] = 0
    stride = size
    while stride >= 2:
        left = slice(stride // 2 - 1, None, stride)
        right = slice(stride - 1, None, stride)
        ta, tb = sa[:, left].copy(), sb[:, left].copy()
        pa, pb = sa[:, right].copy(), sb[:, right].copy()
        sa[:, left], sb[:, left] = pa, pb
        # right prefix = parent prefix followed by the left subtree aggregate
        sa[:, right] = ta * pa
        sb[:, right] = ta * pb + tb
        stride //= 2
    # inclusive state = exclusive prefix applied to zero, then element t
    return a * sb[:, :steps] + b


def parallel_scan_backward(a, states, grad_out):
    """Adjoints of :func:`parallel_scan`, computed by a reversed tree scan."""
    a = np.asarray(a)
    rev_g = grad_out[:, ::-1]
    shifted = np.ones_like(a)
    shifted[:, 1:] = a[:, :0:-1]
    grad_b = parallel_scan(shifted, rev_g)[:, ::-1]
    grad_a = np.zeros_like(a)
    grad_a[:, 1:] = grad_b[:, 1:] * states[:, :-1]
    return grad_a, np.ascontiguousarray(grad_b)
