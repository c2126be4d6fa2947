"""Bidirectional selective state-space layer.

Each direction conditions a zero-order-hold discretization of a diagonal,
strictly stable state matrix on the current token, runs the linear
recurrence over the sequence axis, and gates the read-out.  The two
directions have independent weights and are fused by a linear map over
their concatenation.

Shapes: inputs are ``(..., T, D)``; every leading axis is an independent
lane.  The state per lane is ``N = d_state`` wide and is shared by the
``D_in = expand * D`` input features (``B`` is ``N x D_in``, ``C`` is
``D_in x N``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .autodiff import (
    Tensor,
    as_tensor,
    concat,
    conv1d_depthwise,
    exp,
    flip,
    matmul,
    sigmoid,
    silu,
    softplus,
)
from .autodiff.tensor import unbroadcast
from .params import ParamTree, param, uniform, zeros

ZOH_SERIES_BELOW = 1e-6
DELTA_INIT = 0.1


def _zoh_scale(delta: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    x = delta * a
    small = np.abs(x) < ZOH_SERIES_BELOW
    safe_a = np.where(small, 1.0, a)
    ex = np.exp(x)
    em1 = np.expm1(x)
    scale = np.where(small, delta * (1.0 + 0.5 * x), em1 / safe_a)
    d_delta = np.where(small, 1.0 + x, ex)
    d_a = np.where(small, 0.5 * delta * delta, (x * ex - em1) / (safe_a * safe_a))
    return ex, scale, d_delta, d_a


def zoh_input_scale(delta: Tensor, a: Tensor) -> Tensor:
    """``(exp(delta*a) - 1) / a``, switching to its series near ``delta*a = 0``."""
    _, scale, d_delta, d_a = _zoh_scale(delta.data, a.data)
    sd, sa = delta.shape, a.shape
    return Tensor._make(
        scale.astype(np.result_type(delta.data, a.data)),
        (delta, a),
        lambda g: (unbroadcast(g * d_delta, sd), unbroadcast(g * d_a, sa)),
        "zoh_scale",
    )


def zoh_discretize(a, delta, B) -> tuple[Tensor, Tensor]:
    """Zero-order hold for a diagonal state matrix.

    ``a`` is ``(N,)`` (negative), ``delta`` broadcasts against it (use a
    trailing unit axis for per-token steps), ``B`` is ``(N, D_in)``.
    Returns ``Abar = exp(delta*a)`` and ``Bbar = ((exp(delta*a)-1)/a) B``.
    """
    a, delta, B = as_tensor(a), as_tensor(delta), as_tensor(B)
    if np.any(delta.data <= 0):
        raise ValueError("step size delta must be positive")
    abar = exp(delta * a)
    scale = zoh_input_scale(delta, a)
    bbar = reshape_last(scale) * B
    return abar, bbar


def reshape_last(t: Tensor) -> Tensor:
    return t.reshape(t.shape + (1,))


def linear_recurrence(abar: Tensor, bu: Tensor, method: str = "sequential") -> Tensor:
    """States of ``x_t = abar_t * x_{t-1} + bu_t`` over axis ``-2`` of ``(..., T, N)``.

    ``method`` picks the forward evaluation (``sequential`` compiled loop or
    ``parallel`` tree scan); both share the reverse-time adjoint.
    """
    shape = bu.shape
    a3 = np.broadcast_to(abar.data, shape).reshape((-1,) + shape[-2:])
    b3 = bu.data.reshape((-1,) + shape[-2:])
    if method == "sequential":
        states = kernels.sequential_scan(a3, b3)
    elif method == "parallel":
        states = kernels.parallel_scan(a3, b3)
    else:
        raise ValueError(f"unknown scan method {method!r}")
    a_shape = abar.shape

    def backward(g):
        g3 = g.reshape(states.shape)
        if method == "parallel":
            ga, gb = kernels.parallel_scan_backward(a3, states, g3)
        else:
            ga, gb = kernels.sequential_scan_backward(a3, states, g3)
        return unbroadcast(ga.reshape(shape), a_shape), gb.reshape(shape)

    return Tensor._make(states.reshape(shape), (abar, bu), backward, "scan")


@dataclass
class SSMParams(ParamTree):
    """Weights for one scan direction."""

    a_log: Tensor  # (N,), A = -exp(a_log)
    B: Tensor  # (N, D_in)
    C: Tensor  # (D_in, N)
    D_skip: Tensor  # (D_in,)
    W_u: Tensor  # (D, D_in)
    w_delta: Tensor  # (D, 1)
    b_delta: Tensor  # (1,)
    W_g: Tensor  # (D, D_in)
    conv_k: Tensor  # (D, d_conv)

    @classmethod
    def init(cls, d_model: int, d_state: int, expand: int, d_conv: int, rng, dtype=np.float32):
        d_in = expand * d_model
        spread = np.geomspace(1.0, float(d_state), d_state) if d_state > 1 else np.ones(1)
        return cls(
            a_log=param(np.log(spread), dtype),
            B=param(rng.standard_normal((d_state, d_in)) / np.sqrt(d_state), dtype),
            C=param(rng.standard_normal((d_in, d_state)) / np.sqrt(d_state), dtype),
            D_skip=param(np.ones(d_in), dtype),
            W_u=uniform(rng, (d_model, d_in), d_model, dtype),
            w_delta=uniform(rng, (d_model, 1), d_model, dtype),
            b_delta=param([np.log(np.expm1(DELTA_INIT))], dtype),
            W_g=uniform(rng, (d_model, d_in), d_model, dtype),
            conv_k=uniform(rng, (d_model, d_conv), d_conv, dtype),
        )

    @property
    def A(self) -> Tensor:
        return -exp(self.a_log)


@dataclass
class BiSSMParams(ParamTree):
    fwd: SSMParams
    bwd: SSMParams
    W_o: Tensor  # (2 D_in, D)
    b_o: Tensor  # (D,)

    @classmethod
    def init(cls, d_model: int, d_state: int = 8, expand: int = 2, d_conv: int = 4, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        fwd = SSMParams.init(d_model, d_state, expand, d_conv, rng, dtype)
        bwd = SSMParams.init(d_model, d_state, expand, d_conv, rng, dtype)
        d_in = expand * d_model
        return cls(fwd, bwd, uniform(rng, (2 * d_in, d_model), 2 * d_in, dtype), zeros((d_model,), dtype))


def selective_params(h: Tensor, p: SSMParams) -> tuple[Tensor, Tensor, Tensor]:
    """Token-conditioned scan inputs ``u``, step sizes ``delta`` and output gate ``g``.

    ``u = SiLU(causal_conv(h)) W_u``; ``delta = softplus(h w_delta + b_delta)``
    with a trailing unit axis; ``g = sigmoid(h W_g)``.
    """
    local = conv1d_depthwise(h, p.conv_k, mode="causal") if p.conv_k.shape[1] <= h.shape[-2] else _short_conv(h, p)
    u = matmul(silu(local), p.W_u)
    delta = softplus(matmul(h, p.w_delta) + p.b_delta)
    g = sigmoid(matmul(h, p.W_g))
    return u, delta, g


def _short_conv(h: Tensor, p: SSMParams) -> Tensor:
    # sequences shorter than the conv width only see the most recent taps
    t_len = h.shape[-2]
    return conv1d_depthwise(h, p.conv_k[:, p.conv_k.shape[1] - t_len :], mode="causal")


def selective_scan(u: Tensor, delta: Tensor, p: SSMParams, method: str = "sequential") -> Tensor:
    """Pre-gate read-out ``y_t = C x_t + D_skip * u_t`` of the discretized recurrence."""
    A = p.A
    abar = exp(delta * A)
    scale = zoh_input_scale(delta, A)
    bu = scale * matmul(u, p.B.T)
    states = linear_recurrence(abar, bu, method)
    return matmul(states, p.C.T) + u * p.D_skip


def scan_direction(h: Tensor, p: SSMParams, method: str = "sequential") -> Tensor:
    u, delta, g = selective_params(h, p)
    return g * selective_scan(u, delta, p, method)


def bidirectional_ssm(h: Tensor, p: BiSSMParams, method: str = "sequential") -> Tensor:
    """``[o_fwd ; o_bwd] W_o + b_o`` over the sequence axis ``-2`` of ``h``."""
    axis = h.ndim - 2
    o_fwd = scan_direction(h, p.fwd, method)
    o_bwd = flip(scan_direction(flip(h, axis), p.bwd, method), axis)
    return matmul(concat([o_fwd, o_bwd], axis=-1), p.W_o) + p.b_o
