"""Spatial graph module: per-sample directed adjacency, diffusion and a channel-axis scan.

Adjacency convention: ``A[i, j]`` is the weight of the edge from source
node ``j`` to target node ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, abs_sum, matmul, mean, sigmoid, tanh
from .autodiff.linalg import expm_array
from .params import ParamTree, uniform, zeros
from .ssm import BiSSMParams, bidirectional_ssm

ADJ_EPS = 1e-8
GRAPH_MODES = ("adaptive", "fixed", "ssm-only")
FIXED_EDGE_WEIGHT = 0.5


@dataclass
class SGMParams(ParamTree):
    phi1_w: Tensor | None  # (D, d_node), receiver embedding
    phi1_b: Tensor | None
    phi2_w: Tensor | None  # sender embedding
    phi2_b: Tensor | None
    W0: Tensor | None
    W1: Tensor | None
    spatial: BiSSMParams
    gate_wg: Tensor | None
    gate_ws: Tensor | None
    gate_b: Tensor | None
    out_w: Tensor
    out_b: Tensor
    mode: str = field(default="adaptive")
    eps: float = field(default=ADJ_EPS)

    @classmethod
    def init(
        cls,
        d_model: int,
        d_node: int | None = None,
        d_state: int = 8,
        expand: int = 2,
        d_conv: int = 4,
        mode: str = "adaptive",
        rng=None,
        dtype=np.float32,
    ):
        if mode not in GRAPH_MODES:
            raise ValueError(f"graph mode must be one of {GRAPH_MODES}, got {mode!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        d_node = d_node or max(4, d_model // 2)
        if d_node < 1:
            raise ValueError("d_node must be >= 1")
        learned = mode == "adaptive"
        graph = mode != "ssm-only"
        sq = lambda: uniform(rng, (d_model, d_model), d_model, dtype)  # noqa: E731
        return cls(
            phi1_w=uniform(rng, (d_model, d_node), d_model, dtype) if learned else None,
            phi1_b=zeros((d_node,), dtype) if learned else None,
            phi2_w=uniform(rng, (d_model, d_node), d_model, dtype) if learned else None,
            phi2_b=zeros((d_node,), dtype) if learned else None,
            W0=sq() if graph else None,
            W1=sq() if graph else None,
            spatial=BiSSMParams.init(d_model, d_state, expand, d_conv, rng, dtype),
            gate_wg=sq() if graph else None,
            gate_ws=sq() if graph else None,
            gate_b=zeros((d_model,), dtype) if graph else None,
            out_w=sq(),
            out_b=zeros((d_model,), dtype),
            mode=mode,
        )


def pool_nodes(z_temp: Tensor) -> Tensor:
    """Mean over the time axis: ``(..., T, C, D) -> (..., C, D)``."""
    return mean(z_temp, axis=z_temp.ndim - 3)


def _off_diagonal(c: int, dtype) -> np.ndarray:
    return (1.0 - np.eye(c)).astype(dtype)


def learn_adjacency(U: Tensor, p: SGMParams) -> Tensor:
    """``sigmoid(V1 V2^T) * (1 - I)`` with ``V_k = tanh(U W_k + b_k)``."""
    c = U.shape[-2]
    if c < 2:
        raise ValueError("adjacency learning needs at least two channels")
    v1 = tanh(matmul(U, p.phi1_w) + p.phi1_b)
    v2 = tanh(matmul(U, p.phi2_w) + p.phi2_b)
    scores = matmul(v1, v2.transpose(tuple(range(v2.ndim - 2)) + (v2.ndim - 1, v2.ndim - 2)))
    return sigmoid(scores) * _off_diagonal(c, U.dtype)


def fixed_adjacency(c: int, lead: tuple[int, ...] = (), dtype=np.float32) -> Tensor:
    return Tensor(np.broadcast_to(FIXED_EDGE_WEIGHT * _off_diagonal(c, dtype), lead + (c, c)).copy())


def normalize_adjacency(A: Tensor, eps: float = ADJ_EPS) -> Tensor:
    """Random-walk normalization ``A_ij / (sum_j A_ij + eps)``; zero rows stay zero."""
    if np.any(A.data < 0):
        raise ValueError("adjacency entries must be non-negative")
    degree = A.sum(axis=-1, keepdims=True)
    return A / (degree + eps)


def sparsity_loss(A: Tensor) -> Tensor:
    """Entrywise l1 norm over the last two axes."""
    return abs_sum(A, axis=(-2, -1))


def dag_loss(A: Tensor) -> Tensor:
    """``tr(exp(A*A)) - C`` per matrix, with the closed-form gradient ``2A * exp(A*A)^T``."""
    ad = A.data
    if ad.ndim < 2 or ad.shape[-1] != ad.shape[-2]:
        raise ValueError(f"dag_loss needs square matrices, got {ad.shape}")
    c = ad.shape[-1]
    e = expm_array(ad * ad)
    value = np.trace(e, axis1=-2, axis2=-1) - c
    et = np.swapaxes(e, -1, -2)

    def backward(g):
        return (np.asarray(g)[..., None, None] * 2.0 * ad * et,)

    return Tensor._make(np.asarray(value, dtype=ad.dtype), (A,), backward, "dag_loss")


def _per_time(a_norm: Tensor, z: Tensor) -> Tensor:
    # insert a time axis so one adjacency serves every step
    if z.ndim == a_norm.ndim + 1:
        a_norm = a_norm.reshape(a_norm.shape[:-2] + (1,) + a_norm.shape[-2:])
    return matmul(a_norm, z)


def graph_diffusion(z: Tensor, a_norm: Tensor, p: SGMParams) -> Tensor:
    """``z W0 + A_norm z W1`` at every time step."""
    return matmul(z, p.W0) + matmul(_per_time(a_norm, z), p.W1)


def channel_ssm(z: Tensor, a_norm: Tensor | None, p: SGMParams) -> Tensor:
    """Bidirectional scan over the channel axis of ``A_norm z`` (or ``z`` without a graph)."""
    source = z if a_norm is None else _per_time(a_norm, z)
    return bidirectional_ssm(source, p.spatial)


def spatial_fuse(h_graph: Tensor, h_ssm: Tensor, z: Tensor, p: SGMParams) -> Tensor:
    lam = sigmoid(matmul(h_graph, p.gate_wg) + matmul(h_ssm, p.gate_ws) + p.gate_b)
    mixed = lam * h_graph + (1.0 - lam) * h_ssm
    return matmul(mixed, p.out_w) + p.out_b + z


@dataclass
class SGMOutput:
    z_out: Tensor
    adjacency: Tensor | None
    sparsity: Tensor | None  # per sample
    dag: Tensor | None


def sgm_forward(z_temp: Tensor, p: SGMParams) -> SGMOutput:
    if p.mode == "ssm-only":
        h_ssm = channel_ssm(z_temp, None, p)
        return SGMOutput(matmul(h_ssm, p.out_w) + p.out_b + z_temp, None, None, None)
    c = z_temp.shape[-2]
    if c < 2:
        raise ValueError("the spatial graph needs at least two channels")
    lead = z_temp.shape[:-3]
    if p.mode == "fixed":
        A = fixed_adjacency(c, lead, z_temp.dtype)
        sp = dag = None
    else:
        A = learn_adjacency(pool_nodes(z_temp), p)
        sp = sparsity_loss(A)
        dag = dag_loss(A)
    a_norm = normalize_adjacency(A, p.eps)
    h_graph = graph_diffusion(z_temp, a_norm, p)
    h_ssm = channel_ssm(z_temp, a_norm, p)
    return SGMOutput(spatial_fuse(h_graph, h_ssm, z_temp, p), A, sp, dag)
