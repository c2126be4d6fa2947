"""Multi-scale convolutional embedding: raw ``(T, C)`` samples to ``(T, C, D)`` tokens."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, concat, conv1d_depthwise, layernorm, matmul
from .params import ParamTree, ones, param, uniform, zeros


@dataclass
class MCEParams(ParamTree):
    kernels: list[Tensor]  # per scale (C, k_m)
    lifts: list[Tensor]  # per scale (1, D)
    lift_biases: list[Tensor]  # per scale (D,)
    proj: Tensor  # (M*D, D)
    proj_b: Tensor
    ln_gain: Tensor
    ln_bias: Tensor
    kernel_sizes: tuple[int, ...] = field(default=(3, 5, 7))

    @classmethod
    def init(cls, channels: int, d_model: int, kernel_sizes=(3, 5, 7), rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        kernel_sizes = tuple(int(k) for k in kernel_sizes)
        if not kernel_sizes or any(k < 1 or k % 2 == 0 for k in kernel_sizes):
            raise ValueError(f"kernel sizes must be odd and positive, got {kernel_sizes}")
        m = len(kernel_sizes)
        return cls(
            kernels=[uniform(rng, (channels, k), k, dtype) for k in kernel_sizes],
            lifts=[param(rng.uniform(-1.0, 1.0, (1, d_model)), dtype) for _ in kernel_sizes],
            lift_biases=[zeros((d_model,), dtype) for _ in kernel_sizes],
            proj=uniform(rng, (m * d_model, d_model), m * d_model, dtype),
            proj_b=zeros((d_model,), dtype),
            ln_gain=ones((d_model,), dtype),
            ln_bias=zeros((d_model,), dtype),
            kernel_sizes=kernel_sizes,
        )


def _check_length(x: Tensor, kernel_sizes) -> None:
    if x.shape[-2] < max(kernel_sizes):
        raise ValueError(f"sequence length {x.shape[-2]} is shorter than kernel {max(kernel_sizes)}")


def single_scale(x: Tensor, p: MCEParams, m: int) -> Tensor:
    """Depthwise same-padded conv at scale ``m`` then a pointwise lift: ``(..., T, C, D)``."""
    _check_length(x, p.kernel_sizes)
    conv = conv1d_depthwise(x, p.kernels[m], mode="same")
    return matmul(conv.reshape(conv.shape + (1,)), p.lifts[m]) + p.lift_biases[m]


def pre_norm_features(x: Tensor, p: MCEParams) -> Tensor:
    scales = [single_scale(x, p, m) for m in range(len(p.kernel_sizes))]
    return matmul(concat(scales, axis=-1), p.proj) + p.proj_b


def embed(x: Tensor, p: MCEParams) -> Tensor:
    """``LN(Concat_m[E_m] W + b)``; position ``(t, c)`` only sees input channel ``c``."""
    return layernorm(pre_norm_features(x, p), p.ln_gain, p.ln_bias)


@dataclass
class LinearEmbedParams(ParamTree):
    """Single per-scalar linear lift used when the multi-scale embedding is ablated."""

    weight: Tensor  # (1, D)
    bias: Tensor  # (D,)

    @classmethod
    def init(cls, d_model: int, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        return cls(param(rng.uniform(-1.0, 1.0, (1, d_model)), dtype), zeros((d_model,), dtype))


def linear_embed(x: Tensor, p: LinearEmbedParams) -> Tensor:
    return matmul(x.reshape(x.shape + (1,)), p.weight) + p.bias
