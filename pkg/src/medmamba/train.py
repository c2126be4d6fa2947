"""Adam with decoupled weight decay, cosine schedule, and the early-stopped training loop."""
from __future__ import annotations

import dataclasses
import math
import resource
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import no_grad
from .autodiff.functional import softmax
from .data import Dataset
from .metrics import MetricsReport, compute_metrics
from .model import MedMambaModel, forward, total_loss

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    weight_decay: float = 1e-5
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 32
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    eval_batch: int = 128

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")
        if self.max_epochs < 1 or self.batch_size < 1 or self.eval_batch < 1:
            raise ValueError("max_epochs and batch sizes must be positive")
        if not 1 <= self.patience <= self.max_epochs:
            raise ValueError("patience must lie in [1, max_epochs]")
        if not self.seeds:
            raise ValueError("need at least one seed")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params])


def adam_step(params, grads, state: AdamState, lr_t: float, weight_decay: float = 0.0) -> AdamState:
    """One in-place Adam update with bias correction.

    Decay is decoupled: ``theta -= lr_t * wd * theta`` happens first.
    ``None`` gradients count as zero.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - BETA1**t
    c2 = 1.0 - BETA2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.data.shape}")
        if weight_decay:
            p.data -= (lr_t * weight_decay) * p.data
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        p.data -= (lr_t * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)).astype(p.data.dtype)
    return state


def cosine_lr(epoch: int, max_epochs: int, lr0: float) -> float:
    """Per-epoch cosine annealing from ``lr0`` towards zero, no warmup."""
    if max_epochs < 1:
        raise ValueError("max_epochs must be positive")
    return lr0 * (1.0 + math.cos(math.pi * epoch / max_epochs)) / 2.0


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    val_f1: float
    seconds: float


@dataclass
class RunRecord:
    seed: int
    variant: str
    config: dict
    epochs: list[EpochLog] = field(default_factory=list)
    best_epoch: int = -1
    best_val_f1: float = float("nan")
    test: MetricsReport | None = None
    peak_memory_kb: int = 0  # process max RSS, an allocator-level estimate


def peak_memory_kb() -> int:
    return int(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss)


def predict_proba(model: MedMambaModel, X: np.ndarray, batch: int = 128) -> np.ndarray:
    out = []
    with no_grad():
        for i in range(0, len(X), batch):
            logits, _, _ = forward(model, X[i : i + batch])
            out.append(softmax(logits).data.astype(np.float64))
    return np.concatenate(out, axis=0)


def evaluate(model: MedMambaModel, dataset: Dataset, batch: int = 128) -> MetricsReport:
    return compute_metrics(predict_proba(model, dataset.X, batch), dataset.labels, dataset.K)


def _mean_ce(probs: np.ndarray, labels: np.ndarray) -> float:
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def _snapshot(model) -> list[np.ndarray]:
    return [p.data.copy() for p in model.parameters()]


def _restore(model, snap) -> None:
    for p, d in zip(model.parameters(), snap):
        p.data = d.copy()


def train(
    model: MedMambaModel,
    train_set: Dataset,
    val_set: Dataset,
    test_set: Dataset | None,
    cfg: TrainConfig,
    seed: int = 0,
    val_metric: Callable[[MedMambaModel, Dataset, int], float] | None = None,
    log: Callable[[EpochLog], None] | None = None,
) -> RunRecord:
    """Mini-batch training with early stopping on validation macro-F1.

    The best-validation parameters are restored before the test evaluation.
    Shuffling and dropout draw from ``(seed, epoch)``.  ``val_metric``
    replaces the validation F1 (used to stub the stopping rule).
    """
    for name, ds in (("train", train_set), ("val", val_set)):
        if len(ds) == 0:
            raise ValueError(f"{name} split is empty")
    if test_set is not None and len(test_set) == 0:
        raise ValueError("test split is empty")
    params = model.parameters()
    state = AdamState.zeros_like(params)
    record = RunRecord(seed=seed, variant=model.config.variant, config={**dataclasses.asdict(model.config), **dataclasses.asdict(cfg)})
    best_snap = _snapshot(model)
    best_f1 = -math.inf
    stale = 0
    n = len(train_set)
    for epoch in range(cfg.max_epochs):
        start = time.perf_counter()
        lr_t = cosine_lr(epoch, cfg.max_epochs, cfg.lr)
        order = np.random.default_rng([seed, epoch]).permutation(n)
        drop_rng = np.random.default_rng([seed, epoch, 1])
        total, seen = 0.0, 0
        for i in range(0, n, cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            logits, _, reg = forward(model, train_set.X[idx], training=True, rng=drop_rng)
            loss = total_loss(logits, train_set.labels[idx], reg, model.lambda_sp, model.lambda_dag)
            model.zero_grad()
            loss.backward()
            adam_step(params, [p.grad for p in params], state, lr_t, cfg.weight_decay)
            total += float(loss.data) * len(idx)
            seen += len(idx)
        val_probs = predict_proba(model, val_set.X, cfg.eval_batch)
        if val_metric is None:
            val_f1 = compute_metrics(val_probs, val_set.labels, val_set.K).f1
        else:
            val_f1 = float(val_metric(model, val_set, epoch))
        entry = EpochLog(epoch, lr_t, total / seen, _mean_ce(val_probs, val_set.labels), val_f1, time.perf_counter() - start)
        record.epochs.append(entry)
        if log:
            log(entry)
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_snap = _snapshot(model)
            record.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    _restore(model, best_snap)
    record.best_val_f1 = best_f1
    if test_set is not None:
        record.test = evaluate(model, test_set, cfg.eval_batch)
    record.peak_memory_kb = peak_memory_kb()
    return record


def seed_summary(records: list[RunRecord], metric: str = "f1") -> tuple[float, float]:
    """Mean and population std of a test metric over seeds."""
    vals = np.array([getattr(r.test, metric) for r in records], dtype=np.float64)
    return float(vals.mean()), float(vals.std())

