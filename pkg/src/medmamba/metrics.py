"""Macro-averaged classification metrics with one-vs-rest ranking scores."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROW_SUM_TOL = 1e-4
METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "auroc", "auprc")


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auroc: float
    auprc: float
    per_class: dict[str, np.ndarray]
    confusion: np.ndarray  # rows true, columns predicted

    def as_dict(self) -> dict[str, float]:
        return {k: float(getattr(self, k)) for k in METRIC_NAMES}


def confusion_matrix(labels, preds, K: int) -> np.ndarray:
    cm = np.zeros((K, K), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels), np.asarray(preds)), 1)
    return cm


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(num.shape, dtype=np.float64)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


def binary_auroc(scores, positive) -> float:
    """Trapezoidal area under the ROC curve swept over unique scores.

    Equal to the Mann-Whitney concordance with ties counted as one half.
    Returns nan when one class is absent.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    s, p = scores[order], positive[order]
    # one ROC vertex per distinct threshold
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tpr = np.r_[0.0, np.cumsum(p)[last] / n_pos]
    fpr = np.r_[0.0, np.cumsum(~p)[last] / n_neg]
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))


def binary_average_precision(scores, positive) -> float:
    """Step-wise ``sum (R_i - R_{i-1}) P_i`` over unique thresholds."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    if n_pos == 0:
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    s, p = scores[order], positive[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(p)[last]
    predicted = last + 1
    recall = np.r_[0.0, tp / n_pos]
    precision = tp / predicted
    return float(np.sum((recall[1:] - recall[:-1]) * precision))


def compute_metrics(probs, labels, K: int | None = None) -> MetricsReport:
    """Accuracy plus macro precision/recall/F1 and OvR AUROC/AUPRC.

    Classes without positives (or negatives) in ``labels`` are left out of
    the AUROC/AUPRC macro average.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if probs.ndim != 2 or probs.shape[0] != len(labels):
        raise ValueError(f"probs must be (n, K) with n={len(labels)}, got {probs.shape}")
    if len(labels) == 0:
        raise ValueError("need at least one sample")
    K = probs.shape[1] if K is None else K
    if probs.shape[1] != K:
        raise ValueError(f"probs has {probs.shape[1]} columns, expected {K}")
    if not np.all(np.isfinite(probs)) or np.any(np.abs(probs.sum(axis=1) - 1.0) > ROW_SUM_TOL):
        raise ValueError("each row of probs must be finite and sum to 1")
    if labels.min() < 0 or labels.max() >= K:
        raise ValueError(f"labels must lie in [0, {K})")
    preds = np.argmax(probs, axis=1)
    cm = confusion_matrix(labels, preds, K)
    tp = np.diag(cm).astype(np.float64)
    precision = _safe_ratio(tp, cm.sum(axis=0).astype(np.float64))
    recall = _safe_ratio(tp, cm.sum(axis=1).astype(np.float64))
    f1 = _safe_ratio(2 * precision * recall, precision + recall)
    auroc = np.array([binary_auroc(probs[:, k], labels == k) for k in range(K)])
    auprc = np.array([binary_average_precision(probs[:, k], labels == k) for k in range(K)])
    ranked = ~np.isnan(auroc)
    return MetricsReport(
        accuracy=float(tp.sum() / cm.sum()),
        precision=float(precision.mean()),
        recall=float(recall.mean()),
        f1=float(f1.mean()),
        auroc=float(auroc[ranked].mean()) if ranked.any() else float("nan"),
        auprc=float(auprc[ranked].mean()) if ranked.any() else float("nan"),
        per_class={"precision": precision, "recall": recall, "f1": f1, "auroc": auroc, "auprc": auprc},
        confusion=cm,
    )
