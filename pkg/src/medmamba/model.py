"""Full classifier: embedding, stacked (temporal encoder -> spatial graph) layers, linear head."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, as_tensor, cross_entropy, layernorm, matmul, mean, no_grad
from .autodiff.functional import softmax
from .mce import LinearEmbedParams, MCEParams, embed, linear_embed
from .params import ParamTree, ones, uniform, zeros
from .sgm import SGMParams, sgm_forward
from .tdsse import VIEWS, TDSSEParams, tdsse_forward

VARIANTS = (
    "full",
    "no-mce",
    "no-tdsse",
    "no-sgm",
    "fixed-graph",
    "no-sp",
    "no-dag",
    "raw-only",
    "raw+diff",
    "raw+freq",
)


@dataclass(frozen=True)
class MedMambaConfig:
    D: int = 32
    L: int = 2
    d_state: int = 8
    d_conv: int = 4
    E: int = 2
    kernels: tuple[int, ...] = (3, 5, 7)
    d_node: int | None = None
    K: int = 3
    C: int = 8
    T: int = 128
    lambda_sp: float = 0.01
    lambda_dag: float = 0.5
    dropout: float = 0.2
    seed: int = 0
    variant: str = "full"

    def __post_init__(self):
        object.__setattr__(self, "kernels", tuple(int(k) for k in self.kernels))
        if self.lambda_sp < 0 or self.lambda_dag < 0:
            raise ValueError("regularization weights must be non-negative")
        if self.K < 2:
            raise ValueError("need at least two classes")
        if self.L < 1:
            raise ValueError("need at least one layer")
        if min(self.D, self.d_state, self.d_conv, self.E, self.C, self.T) < 1:
            raise ValueError("sizes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        parse_variant(self.variant)

    @property
    def node_width(self) -> int:
        return self.d_node or max(4, self.D // 2)

    def replace(self, **changes) -> "MedMambaConfig":
        return dataclasses.replace(self, **changes)


def parse_variant(tag: str) -> dict:
    """Structural switches for an ablation tag (``kernels=3,5`` selects a kernel subset)."""
    spec = {"embed": "mce", "views": VIEWS, "graph": "adaptive", "kernels": None, "use_sp": True, "use_dag": True}
    if tag.startswith("kernels="):
        try:
            spec["kernels"] = tuple(int(k) for k in tag.split("=", 1)[1].split(","))
        except ValueError:
            raise ValueError(f"bad kernel subset in {tag!r}") from None
        return spec
    if tag not in VARIANTS:
        raise ValueError(f"unknown variant {tag!r}; expected one of {VARIANTS} or kernels=k1,k2")
    if tag == "no-mce":
        spec["embed"] = "linear"
    elif tag in ("no-tdsse", "raw-only"):
        spec["views"] = ("raw",)
    elif tag == "raw+diff":
        spec["views"] = ("raw", "diff")
    elif tag == "raw+freq":
        spec["views"] = ("raw", "freq")
    elif tag == "no-sgm":
        spec["graph"] = "ssm-only"
    elif tag == "fixed-graph":
        spec["graph"] = "fixed"
    elif tag == "no-sp":
        spec["use_sp"] = False
    elif tag == "no-dag":
        spec["use_dag"] = False
    return spec


@dataclass
class LayerParams(ParamTree):
    ln_gain: Tensor
    ln_bias: Tensor
    tdsse: TDSSEParams
    sgm: SGMParams


@dataclass
class MedMambaModel(ParamTree):
    embedding: MCEParams | LinearEmbedParams
    layers: list[LayerParams]
    head_w: Tensor  # (D, K)
    head_b: Tensor
    config: MedMambaConfig = field(default_factory=MedMambaConfig)

    @property
    def lambda_sp(self) -> float:
        return self.config.lambda_sp if parse_variant(self.config.variant)["use_sp"] else 0.0

    @property
    def lambda_dag(self) -> float:
        return self.config.lambda_dag if parse_variant(self.config.variant)["use_dag"] else 0.0

    def astype(self, dtype) -> "MedMambaModel":
        for t in self.parameters():
            t.data = t.data.astype(dtype)
        return self


@dataclass
class ForwardDiagnostics:
    alphas: list[np.ndarray]
    adjacency: list[np.ndarray | None]
    sparsity: list[float]
    dag: list[float]


def init(config: MedMambaConfig, seed: int | None = None, dtype=np.float32) -> MedMambaModel:
    """Build a model; identical ``(config, seed)`` give bit-identical parameters."""
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    spec = parse_variant(config.variant)
    kernels = spec["kernels"] or config.kernels
    if spec["embed"] == "mce":
        embedding = MCEParams.init(config.C, config.D, kernels, rng, dtype)
    else:
        embedding = LinearEmbedParams.init(config.D, rng, dtype)
    layers = []
    for _ in range(config.L):
        layers.append(
            LayerParams(
                ones((config.D,), dtype),
                zeros((config.D,), dtype),
                TDSSEParams.init(config.T, config.D, config.d_state, config.E, config.d_conv, spec["views"], rng, dtype),
                SGMParams.init(config.D, config.node_width, config.d_state, config.E, config.d_conv, spec["graph"], rng, dtype),
            )
        )
    head_w = uniform(rng, (config.D, config.K), config.D, dtype)
    return MedMambaModel(embedding, layers, head_w, zeros((config.K,), dtype), config)


def ablation_variant(config: MedMambaConfig, tag: str, seed: int | None = None, dtype=np.float32) -> MedMambaModel:
    return init(config.replace(variant=tag), seed, dtype)


def forward(
    model: MedMambaModel,
    x,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, ForwardDiagnostics, tuple[Tensor, Tensor]]:
    """Logits for ``x`` of shape ``(T, C)`` or ``(B, T, C)``.

    Also returns per-layer diagnostics and the structure penalties summed
    over layers and averaged over the batch.
    """
    cfg = model.config
    x = as_tensor(x)
    if x.dtype != model.head_w.dtype:
        x = Tensor(x.data.astype(model.head_w.dtype))
    if x.shape[-2:] != (cfg.T, cfg.C):
        raise ValueError(f"expected samples of shape ({cfg.T}, {cfg.C}), got {x.shape[-2:]}")
    if isinstance(model.embedding, MCEParams):
        z = embed(x, model.embedding)
    else:
        z = linear_embed(x, model.embedding)
    diag = ForwardDiagnostics([], [], [], [])
    sp_total = Tensor(np.zeros((), dtype=x.dtype))
    dag_total = Tensor(np.zeros((), dtype=x.dtype))
    for layer in model.layers:
        h = layernorm(z, layer.ln_gain, layer.ln_bias)
        z_temp, alpha = tdsse_forward(h, layer.tdsse, cfg.dropout, rng, training, source=z)
        out = sgm_forward(z_temp, layer.sgm)
        z = out.z_out
        diag.alphas.append(alpha.data.copy())
        diag.adjacency.append(None if out.adjacency is None else out.adjacency.data.copy())
        if out.sparsity is not None:
            sp_total = sp_total + mean(out.sparsity)
            dag_total = dag_total + mean(out.dag)
        diag.sparsity.append(0.0 if out.sparsity is None else float(np.mean(out.sparsity.data)))
        diag.dag.append(0.0 if out.dag is None else float(np.mean(out.dag.data)))
    n = z.ndim
    pooled = mean(z, axis=(n - 3, n - 2))
    pooled = pooled.reshape(pooled.shape[:-1] + (1, pooled.shape[-1]))
    logits = matmul(pooled, model.head_w) + model.head_b
    logits = logits.reshape(logits.shape[:-2] + (logits.shape[-1],))
    return logits, diag, (sp_total, dag_total)


def total_loss(logits: Tensor, labels, reg: tuple[Tensor, Tensor], lambda_sp: float, lambda_dag: float) -> Tensor:
    """Cross-entropy plus weighted sparsity and acyclicity penalties."""
    loss = cross_entropy(logits, labels)
    sp, dag = reg
    if lambda_sp:
        loss = loss + lambda_sp * sp
    if lambda_dag:
        loss = loss + lambda_dag * dag
    return loss


def predict(model: MedMambaModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Class indices (ties go to the lowest index) and class probabilities."""
    with no_grad():
        logits, _, _ = forward(model, x)
    probs = softmax(logits).data
    return np.argmax(logits.data, axis=-1), probs


def parameter_count(config: MedMambaConfig) -> int:
    """Closed-form parameter count for a configuration."""
    spec = parse_variant(config.variant)
    D, N, E, k, C, K = config.D, config.d_state, config.E, config.d_conv, config.C, config.K
    d_in = E * D
    if spec["embed"] == "mce":
        ks = spec["kernels"] or config.kernels
        emb = sum(C * kk + 2 * D for kk in ks) + len(ks) * D * D + D + 2 * D
    else:
        emb = 2 * D
    one_dir = N + N * d_in + d_in * N + d_in + D * d_in + D + 1 + D * d_in + D * k
    bi = 2 * one_dir + 2 * d_in * D + D
    views = spec["views"]
    n_views = len(views)
    tdsse = bi * sum(v in views for v in ("raw", "diff"))
    if "freq" in views:
        tdsse += 2 * (config.T // 2 + 1) * D
    tdsse += n_views * (D * D + D)
    if n_views > 1:
        tdsse += n_views * D * D + D + D * n_views + n_views
    sgm = bi + D * D + D
    if spec["graph"] != "ssm-only":
        sgm += 2 * D * D + 2 * D * D + D
    if spec["graph"] == "adaptive":
        sgm += 2 * (D * config.node_width + config.node_width)
    return emb + config.L * (2 * D + tdsse + sgm) + D * K + K
