"""Central-difference verification of analytic adjoints."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor

# offsets and weights of the central-difference stencils, divided by h
_STENCILS = {
    3: ((1.0, -1.0), (0.5, -0.5)),
    5: ((2.0, 1.0, -1.0, -2.0), (-1.0 / 12, 8.0 / 12, -8.0 / 12, 1.0 / 12)),
}


def numeric_gradient(f: Callable[[], Tensor], p: Tensor, index: int, h: float, stencil: int = 3) -> float:
    offsets, weights = _STENCILS[stencil]
    flat = p.data.reshape(-1)
    orig = flat[index]
    total = 0.0
    try:
        for off, w in zip(offsets, weights):
            flat[index] = orig + off * h
            val = float(f().data)
            if not np.isfinite(val):
                raise FloatingPointError("objective is not finite near the check point")
            total += w * val
    finally:
        flat[index] = orig
    return total / h


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    stencil: int = 3,
) -> float:
    """Largest relative error between ``backward()`` and central differences.

    ``f`` rebuilds a scalar from the current contents of ``params`` each call.
    The error per coordinate is ``|g_ad - g_fd| / (|g_fd| + 1e-8)``.  With
    ``max_coords`` set, that many coordinates per parameter are sampled.
    ``stencil=5`` uses the fourth-order central formula, which tolerates a
    larger ``h`` and so less cancellation error on tiny gradients.
    """
    if stencil not in _STENCILS:
        raise ValueError(f"stencil must be one of {sorted(_STENCILS)}")
    for p in params:
        if p.dtype != np.float64:
            raise TypeError("grad_check runs in float64 only")
        p.grad = None
        p.requires_grad = True
    out = f()
    if not np.all(np.isfinite(out.data)):
        raise FloatingPointError("objective is not finite at the check point")
    out.backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        size = p.data.size
        coords = np.arange(size)
        if max_coords is not None and size > max_coords:
            rng = rng or np.random.default_rng(0)
            coords = rng.choice(size, size=max_coords, replace=False)
        for i in coords:
            fd = numeric_gradient(f, p, int(i), h, stencil)
            ad = float(analytic.reshape(-1)[i])
            worst = max(worst, abs(ad - fd) / (abs(fd) + 1e-8))
    return worst
