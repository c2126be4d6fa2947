"""Tri-branch differential state-space encoder.

Raw, first-difference and spectrally filtered views of ``z[..., T, C, D]``
are each passed through a sigmoid element gate; a softmax over the pooled
views mixes them, and the input is added back.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    ComplexPair,
    Tensor,
    complex_mul,
    concat,
    dropout,
    irfft,
    matmul,
    mean,
    pad_time,
    rfft,
    sigmoid,
    silu,
    softmax,
    transpose,
)
from .params import ParamTree, ones, uniform, zeros
from .ssm import BiSSMParams, bidirectional_ssm

VIEWS = ("raw", "diff", "freq")


@dataclass
class TDSSEParams(ParamTree):
    raw: BiSSMParams | None
    diff: BiSSMParams | None
    freq_re: Tensor | None  # (F, 1, D)
    freq_im: Tensor | None
    gate_w: list[Tensor]  # per active view (D, D)
    gate_b: list[Tensor]
    mlp_w1: Tensor | None  # (V*D, H_g)
    mlp_b1: Tensor | None
    mlp_w2: Tensor | None  # (H_g, V)
    mlp_b2: Tensor | None
    views: tuple[str, ...] = field(default=VIEWS)

    @classmethod
    def init(
        cls,
        seq_len: int,
        d_model: int,
        d_state: int = 8,
        expand: int = 2,
        d_conv: int = 4,
        views=VIEWS,
        rng=None,
        dtype=np.float32,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        views = tuple(views)
        if not views or any(v not in VIEWS for v in views) or len(set(views)) != len(views):
            raise ValueError(f"views must be a non-empty subset of {VIEWS}, got {views}")
        views = tuple(v for v in VIEWS if v in views)
        n_bins = seq_len // 2 + 1
        raw = BiSSMParams.init(d_model, d_state, expand, d_conv, rng, dtype) if "raw" in views else None
        diff = BiSSMParams.init(d_model, d_state, expand, d_conv, rng, dtype) if "diff" in views else None
        freq_re = ones((n_bins, 1, d_model), dtype) if "freq" in views else None
        freq_im = zeros((n_bins, 1, d_model), dtype) if "freq" in views else None
        gate_w = [uniform(rng, (d_model, d_model), d_model, dtype) for _ in views]
        gate_b = [zeros((d_model,), dtype) for _ in views]
        n = len(views)
        if n > 1:
            mlp_w1 = uniform(rng, (n * d_model, d_model), n * d_model, dtype)
            mlp_b1 = zeros((d_model,), dtype)
            mlp_w2 = uniform(rng, (d_model, n), d_model, dtype)
            mlp_b2 = zeros((n,), dtype)
        else:
            mlp_w1 = mlp_b1 = mlp_w2 = mlp_b2 = None
        return cls(raw, diff, freq_re, freq_im, gate_w, gate_b, mlp_w1, mlp_b1, mlp_w2, mlp_b2, views)


def diff_view(z: Tensor) -> Tensor:
    """``[0; z_2 - z_1; ...; z_T - z_{T-1}]`` along the time axis ``-3``."""
    axis = z.ndim - 3
    t_len = z.shape[axis]
    if t_len == 1:
        return z * 0.0
    later = z[(slice(None),) * axis + (slice(1, None),)]
    earlier = z[(slice(None),) * axis + (slice(0, t_len - 1),)]
    return pad_time(later - earlier, 1, 0, axis)


def freq_view(z: Tensor, w_re: Tensor, w_im: Tensor) -> Tensor:
    """Real-FFT along time, multiply by the ``(F, 1, D)`` complex filter, invert."""
    axis = z.ndim - 3
    spectrum = rfft(z, axis=axis)
    filtered = complex_mul(spectrum, ComplexPair(w_re, w_im))
    return irfft(filtered, z.shape[axis], axis=axis)


def _over_time(z: Tensor, p: BiSSMParams) -> Tensor:
    # (..., T, C, D) -> lanes (..., C) scanning T
    n = z.ndim
    perm = tuple(range(n - 3)) + (n - 2, n - 3, n - 1)
    return transpose(bidirectional_ssm(transpose(z, perm), p), perm)


def local_gate(h: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return sigmoid(matmul(h, weight) + bias) * h


def global_gate(gated: list[Tensor], p: TDSSEParams) -> Tensor:
    """View weights ``softmax(MLP([s_1; ...; s_V]))`` with ``s_i`` pooled over (t, c)."""
    if len(gated) == 1:
        lead = gated[0].shape[:-3]
        return Tensor(np.ones(lead + (1,), dtype=gated[0].dtype))
    n = gated[0].ndim
    pooled = [mean(h, axis=(n - 3, n - 2)) for h in gated]
    hidden = silu(matmul(_rowvec(concat(pooled, axis=-1)), p.mlp_w1) + p.mlp_b1)
    logits = matmul(hidden, p.mlp_w2) + p.mlp_b2
    return _unrow(softmax(logits, axis=-1))


def _rowvec(x: Tensor) -> Tensor:
    return x.reshape(x.shape[:-1] + (1, x.shape[-1]))


def _unrow(x: Tensor) -> Tensor:
    return x.reshape(x.shape[:-2] + (x.shape[-1],))


def compute_views(z: Tensor, p: TDSSEParams) -> list[Tensor]:
    views = []
    for name in p.views:
        if name == "raw":
            views.append(_over_time(z, p.raw))
        elif name == "diff":
            views.append(_over_time(diff_view(z), p.diff))
        else:
            views.append(freq_view(z, p.freq_re, p.freq_im))
    return views


def fuse(gated: list[Tensor], alpha: Tensor) -> Tensor:
    total = None
    for i, h in enumerate(gated):
        weight = alpha[..., i]
        term = weight.reshape(weight.shape + (1, 1, 1)) * h
        total = term if total is None else total + term
    return total


def tdsse_forward(
    z: Tensor,
    p: TDSSEParams,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
    training: bool = False,
    source: Tensor | None = None,
) -> tuple[Tensor, Tensor]:
    """Returns ``(sum_i alpha_i * gated_i + residual, alpha)``.

    Branches read ``z``; the residual is ``source`` when given (the
    un-normalized stream in a pre-norm stack), else ``z``.
    """
    views = compute_views(z, p)
    gated = [local_gate(h, w, b) for h, w, b in zip(views, p.gate_w, p.gate_b)]
    alpha = global_gate(gated, p)
    fused = dropout(fuse(gated, alpha), dropout_rate, rng, training)
    residual = z if source is None else source
    return fused + residual, alpha
