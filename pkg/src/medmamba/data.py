"""Datasets: CSV ingestion, per-sample z-scoring, SD/SI splits, synthetic
recordings with planted class structure, and test-time perturbations."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

STD_FLOOR = 1e-8


class DataFormatError(ValueError):
    """Malformed dataset file; the message carries the offending line number."""


@dataclass(frozen=True)
class Sample:
    x: np.ndarray  # (T, C)
    label: int
    subject_id: int


@dataclass(frozen=True)
class Dataset:
    """Immutable stack of samples sharing one ``(T, C)`` shape."""

    X: np.ndarray  # (n, T, C)
    labels: np.ndarray
    subjects: np.ndarray
    K: int

    def __post_init__(self):
        X = np.asarray(self.X)
        if X.ndim != 3:
            raise ValueError(f"X must be (n, T, C), got shape {X.shape}")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        subjects = np.asarray(self.subjects, dtype=np.int64).reshape(-1)
        if not len(X) == len(labels) == len(subjects):
            raise ValueError("X, labels and subjects differ in length")
        if self.K < 1:
            raise ValueError("K must be positive")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.K):
            raise ValueError(f"labels must lie in [0, {self.K})")
        if not np.all(np.isfinite(X)):
            raise ValueError("samples must be finite")
        X = X.copy()
        X.flags.writeable = False
        labels.flags.writeable = False
        subjects.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "subjects", subjects)

    @classmethod
    def from_samples(cls, samples: list[Sample], K: int) -> "Dataset":
        if not samples:
            raise ValueError("no samples")
        shape = samples[0].x.shape
        for s in samples:
            if s.x.shape != shape:
                raise ValueError(f"inconsistent sample shape {s.x.shape} vs {shape}")
        return cls(
            np.stack([s.x for s in samples]),
            np.array([s.label for s in samples]),
            np.array([s.subject_id for s in samples]),
            K,
        )

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.X[i], int(self.labels[i]), int(self.subjects[i]))

    def __iter__(self) -> Iterator[Sample]:
        return (self[i] for i in range(len(self)))

    @property
    def T(self) -> int:
        return self.X.shape[1]

    @property
    def C(self) -> int:
        return self.X.shape[2]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.labels[idx], self.subjects[idx], self.K)

    def with_X(self, X: np.ndarray) -> "Dataset":
        return Dataset(X, self.labels, self.subjects, self.K)


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "SI"
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0

    def __post_init__(self):
        mode = self.mode.upper()
        if mode not in ("SD", "SI"):
            raise ValueError(f"split mode must be SD or SI, got {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        r = tuple(float(v) for v in self.ratios)
        if len(r) != 3 or min(r) <= 0 or abs(sum(r) - 1.0) > 1e-9:
            raise ValueError(f"ratios must be three positive numbers summing to 1, got {self.ratios}")
        object.__setattr__(self, "ratios", r)


Edge = tuple[int, int, int, float]  # (source, target, lag, gain)


def _default_frequencies() -> tuple[float, ...]:
    return (3.0, 7.0, 13.0)


def _default_edges() -> tuple[tuple[Edge, ...], ...]:
    # each class routes the rhythm along its own directed chain
    return (
        ((0, 2, 3, 0.8), (2, 4, 5, 0.7)),
        ((1, 3, 4, 0.8), (3, 5, 2, 0.7)),
        ((0, 5, 6, 0.8), (5, 6, 3, 0.7)),
    )


@dataclass(frozen=True)
class SyntheticSpec:
    K: int = 3
    C: int = 8
    T: int = 128
    subjects_per_class: int = 20
    samples_per_subject: int = 20
    frequencies: tuple[float, ...] = field(default_factory=_default_frequencies)
    edges: tuple[tuple[Edge, ...], ...] = field(default_factory=_default_edges)
    rhythm_channels: tuple[int, ...] = (0, 1)
    amplitude: float = 1.0
    noise_std: float = 0.5
    subject_offset_std: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.K < 1 or self.C < 1 or self.T < 1:
            raise ValueError("K, C and T must be positive")
        if self.subjects_per_class < 1 or self.samples_per_subject < 1:
            raise ValueError("need at least one subject per class and one sample per subject")
        if len(self.frequencies) != self.K:
            raise ValueError(f"need one frequency per class, got {len(self.frequencies)} for K={self.K}")
        if any(not 0 <= f < self.T / 2 for f in self.frequencies):
            raise ValueError("frequencies must lie in [0, T/2)")
        if len(self.edges) not in (0, self.K):
            raise ValueError("edges must be empty or given per class")
        for per_class in self.edges:
            for src, dst, lag, _ in per_class:
                if not (0 <= src < self.C and 0 <= dst < self.C) or src == dst:
                    raise ValueError(f"edge {src}->{dst} is out of range or a self-loop")
                if not 0 <= lag < self.T:
                    raise ValueError(f"lag {lag} must lie in [0, T)")
        if any(not 0 <= c < self.C for c in self.rhythm_channels):
            raise ValueError("rhythm channel out of range")
        if self.noise_std < 0 or self.subject_offset_std < 0:
            raise ValueError("standard deviations must be non-negative")


def _lagged(signal: np.ndarray, lag: int) -> np.ndarray:
    out = np.zeros_like(signal)
    if lag == 0:
        out[:] = signal
    else:
        out[lag:] = signal[:-lag]
    return out


def synth_sample(spec: SyntheticSpec, label: int, offset: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    T, C = spec.T, spec.C
    t = np.arange(T, dtype=np.float64)
    x = np.zeros((T, C))
    phase = rng.uniform(0.0, 2.0 * np.pi)
    rhythm = spec.amplitude * np.sin(2.0 * np.pi * spec.frequencies[label] * t / T + phase)
    for c in spec.rhythm_channels:
        x[:, c] += rhythm
    if spec.edges:
        # edges apply in listed order so chains propagate
        for src, dst, lag, gain in spec.edges[label]:
            x[:, dst] += gain * _lagged(x[:, src], lag)
    x += spec.noise_std * rng.standard_normal((T, C))
    return x + offset


def generate_synthetic(spec: SyntheticSpec | None = None) -> Dataset:
    """Class rhythms, lagged couplings, Gaussian noise and a constant offset per subject."""
    spec = spec or SyntheticSpec()
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    X, labels, subjects = [], [], []
    sid = 0
    for k in range(spec.K):
        for _ in range(spec.subjects_per_class):
            offset = spec.subject_offset_std * rng.standard_normal(spec.C)
            for _ in range(spec.samples_per_subject):
                X.append(synth_sample(spec, k, offset, rng))
                labels.append(k)
                subjects.append(sid)
            sid += 1
    return Dataset(np.stack(X).astype(np.float32), np.array(labels), np.array(subjects), spec.K)


def drift_ramp(T: int) -> np.ndarray:
    """``t/T - 1/2`` for ``t = 1..T``."""
    return np.arange(1, T + 1, dtype=np.float64) / T - 0.5


def inject_drift(
    x: np.ndarray,
    s: float,
    rng: np.random.Generator | None = None,
    coeffs: np.ndarray | None = None,
) -> np.ndarray:
    """Add ``s * a_c * (t/T - 1/2)`` per channel, ``a_c ~ U(-sigma_c, sigma_c)``.

    ``sigma_c`` is the within-sample std of channel ``c``.  ``coeffs``
    overrides the sampled ``a_c``.
    """
    if s < 0:
        raise ValueError("drift strength must be non-negative")
    x = np.asarray(x)
    T, C = x.shape
    if coeffs is None:
        if rng is None:
            raise ValueError("need rng or coeffs")
        sigma = x.std(axis=0)
        coeffs = rng.uniform(-1.0, 1.0, C) * sigma
    coeffs = np.broadcast_to(np.asarray(coeffs, dtype=np.float64), (C,))
    return (x + s * drift_ramp(T)[:, None] * coeffs[None, :]).astype(x.dtype)


def mask_channels(x: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Zero ``floor(p*C)`` distinct channels chosen uniformly."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("missing rate must lie in [0, 1]")
    x = np.array(x, copy=True)
    C = x.shape[-1]
    n = int(np.floor(p * C + 1e-9))
    if n:
        x[:, rng.choice(C, size=n, replace=False)] = 0.0
    return x


def _sizes(n: int, ratios) -> tuple[int, int, int]:
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def _stratified_order(units: np.ndarray, unit_labels: np.ndarray, rng) -> np.ndarray:
    # shuffle within each class, then interleave classes so every prefix stays balanced
    keyed = []
    for k in np.unique(unit_labels):
        members = rng.permutation(units[unit_labels == k])
        frac = (np.arange(len(members)) + 0.5) / len(members)
        keyed.extend(zip(frac, [k] * len(members), members))
    keyed.sort(key=lambda r: (r[0], r[1]))
    return np.array([m for _, _, m in keyed], dtype=np.int64)


def split(dataset: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset, Dataset]:
    """Sample-level (SD) or subject-level (SI) train/val/test split, stratified by class."""
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)
    if spec.mode == "SD":
        order = _stratified_order(np.arange(n), dataset.labels, rng)
        a, b, _ = _sizes(n, spec.ratios)
        parts = order[:a], order[a : a + b], order[a + b :]
    else:
        subj = np.unique(dataset.subjects)
        if len(subj) < 3:
            raise ValueError(f"SI split needs at least 3 subjects, got {len(subj)}")
        # a subject's class is its majority label
        subj_label = np.array([np.bincount(dataset.labels[dataset.subjects == s]).argmax() for s in subj])
        order = _stratified_order(subj, subj_label, rng)
        a, b, c = _sizes(len(subj), spec.ratios)
        # every split gets at least one subject
        if b == 0:
            a, b = a - 1, 1
        if c == 0:
            a, c = a - 1, 1
        groups = order[:a], order[a : a + b], order[a + b :]
        parts = tuple(np.flatnonzero(np.isin(dataset.subjects, g)) for g in groups)
    return tuple(dataset.subset(np.sort(p)) for p in parts)


def standardize(dataset: Dataset) -> Dataset:
    """Per-sample, per-channel z-score with a std floor."""
    X = dataset.X.astype(np.float64)
    mu = X.mean(axis=1, keepdims=True)
    sd = X.std(axis=1, keepdims=True)
    Z = (X - mu) / np.maximum(sd, STD_FLOOR)
    return dataset.with_X(Z.astype(dataset.X.dtype))


def _fmt(v: float) -> str:
    return format(float(v), ".9g")


def write_csv(dataset: Dataset, path) -> None:
    lines = [f"{dataset.T},{dataset.C},{dataset.K}"]
    for s in dataset:
        lines.append(f"{s.label},{s.subject_id}")
        lines.extend(",".join(_fmt(v) for v in row) for row in s.x)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _ints(line: str, n: int, lineno: int, what: str) -> list[int]:
    parts = line.split(",")
    if len(parts) != n:
        raise DataFormatError(f"line {lineno}: expected {n} integers for {what}, got {line!r}")
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise DataFormatError(f"line {lineno}: {what} must be integers, got {line!r}") from None


def load_csv(path) -> Dataset:
    """Parse the block format: ``T,C,K`` then per sample ``label,subject_id`` and ``T`` rows."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh]
    while lines and not lines[-1]:
        lines.pop()
    if not lines:
        raise DataFormatError("line 1: empty file")
    T, C, K = _ints(lines[0], 3, 1, "header T,C,K")
    if min(T, C, K) < 1:
        raise DataFormatError("line 1: T, C and K must be positive")
    block = T + 1
    body = lines[1:]
    if not body:
        raise DataFormatError("line 2: no samples")
    X, labels, subjects = [], [], []
    for start in range(0, len(body), block):
        lineno = start + 2
        label, sid = _ints(body[start], 2, lineno, "label,subject_id")
        if not 0 <= label < K:
            raise DataFormatError(f"line {lineno}: unknown label {label} (K={K})")
        rows = body[start + 1 : start + block]
        if len(rows) != T:
            raise DataFormatError(f"line {lineno + len(rows) + 1}: sample has {len(rows)} rows, expected T={T}")
        x = np.empty((T, C))
        for i, row in enumerate(rows):
            parts = row.split(",")
            if len(parts) != C:
                raise DataFormatError(f"line {lineno + 1 + i}: expected C={C} values, got {len(parts)}")
            try:
                x[i] = [float(p) for p in parts]
            except ValueError:
                raise DataFormatError(f"line {lineno + 1 + i}: non-numeric value in {row!r}") from None
        if not np.all(np.isfinite(x)):
            raise DataFormatError(f"line {lineno}: non-finite value in sample")
        X.append(x)
        labels.append(label)
        subjects.append(sid)
    return Dataset(np.stack(X).astype(np.float32), np.array(labels), np.array(subjects), K)
