"""Ablation, robustness and scaling experiments built on the training loop."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, exp, matmul, tsum
from .data import Dataset, SplitSpec, inject_drift, mask_channels, split
from .metrics import METRIC_NAMES
from .model import VARIANTS, MedMambaConfig, MedMambaModel, forward, init, total_loss
from .train import RunRecord, TrainConfig, evaluate, train

DRIFT_LEVELS = (0.0, 0.25, 0.5, 0.75, 1.0)
MISSING_LEVELS = (0.0, 0.1, 0.2, 0.3, 0.4)
PROTOCOLS = ("drift", "missing")


def train_seeds(
    config: MedMambaConfig,
    splits: tuple[Dataset, Dataset, Dataset],
    tcfg: TrainConfig,
    log=None,
) -> list[tuple[RunRecord, MedMambaModel]]:
    """One training run per seed; the seed drives init, shuffling and dropout."""
    out = []
    for seed in tcfg.seeds:
        model = init(config.replace(seed=seed), seed)
        out.append((train(model, *splits, tcfg, seed=seed, log=log), model))
    return out


@dataclass
class AblationTable:
    records: dict[str, list[RunRecord]]  # variant -> per-seed records

    def rows(self) -> list[tuple]:
        """``(variant, seed, *metrics)`` for every run."""
        out = []
        for variant, recs in self.records.items():
            for r in recs:
                out.append((variant, r.seed, *(getattr(r.test, m) for m in METRIC_NAMES)))
        return out

    def summary(self, reference: str = "full") -> list[tuple]:
        """``(variant, metric, mean, std, delta)`` with ``delta = reference - variant`` in means."""
        ref = self.records.get(reference)
        out = []
        for variant, recs in self.records.items():
            for m in METRIC_NAMES:
                vals = np.array([getattr(r.test, m) for r in recs])
                delta = float("nan")
                if ref is not None:
                    delta = float(np.mean([getattr(r.test, m) for r in ref]) - vals.mean())
                out.append((variant, m, float(vals.mean()), float(vals.std()), delta))
        return out


def run_ablation_suite(
    base: MedMambaConfig,
    dataset: Dataset,
    tcfg: TrainConfig,
    variants=VARIANTS,
    split_spec: SplitSpec = SplitSpec("SI"),
    log=None,
) -> AblationTable:
    """Train every variant on the same split across all seeds."""
    if split_spec.mode != "SI":
        raise ValueError("the ablation suite runs on a subject-independent split")
    splits = split(dataset, split_spec)
    table = {}
    for v in variants:
        runs = train_seeds(base.replace(variant=v), splits, tcfg, log=log)
        table[v] = [r for r, _ in runs]
    return AblationTable(table)


def perturb(dataset: Dataset, protocol: str, level: float, seed: int = 0) -> Dataset:
    """Perturbed copy of every sample; one fixed RNG stream per call."""
    if protocol not in PROTOCOLS:
        raise ValueError(f"protocol must be one of {PROTOCOLS}, got {protocol!r}")
    rng = np.random.default_rng(seed)
    if protocol == "drift":
        X = [inject_drift(x, level, rng) for x in dataset.X]
    else:
        X = [mask_channels(x, level, rng) for x in dataset.X]
    return dataset.with_X(np.stack(X))


def run_robustness(model: MedMambaModel, test_set: Dataset, protocol: str, levels=None, seed: int = 0) -> list[tuple]:
    """``(level, f1, auroc)`` per perturbation level."""
    if levels is None:
        levels = DRIFT_LEVELS if protocol == "drift" else MISSING_LEVELS
    rows = []
    for level in levels:
        report = evaluate(model, perturb(test_set, protocol, float(level), seed))
        rows.append((float(level), report.f1, report.auroc))
    return rows


def quadratic_reference(x: Tensor) -> Tensor:
    """Test-only control: dense pairwise kernel ``exp(-x x^T / d) x`` over time."""
    scale = 1.0 / x.shape[-1]
    gram = matmul(x, x.transpose((1, 0))) * scale
    return matmul(exp(-gram), x)


def _time_call(fn, repeats: int) -> float:
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def _model_step(config: MedMambaConfig, T: int, seed: int):
    model = init(config.replace(T=T), seed)
    x = np.random.default_rng(seed).standard_normal((1, T, config.C)).astype(np.float32)

    def step():
        logits, _, reg = forward(model, x)
        loss = total_loss(logits, np.array([0]), reg, model.lambda_sp, model.lambda_dag)
        model.zero_grad()
        loss.backward()

    return step


def _quadratic_step(config: MedMambaConfig, T: int, seed: int):
    # pairwise over the full C*D width the model carries per step, so the T^2 term dominates overhead
    data = np.random.default_rng(seed).standard_normal((T, config.C * config.D)).astype(np.float32)

    def step():
        x = Tensor(data, requires_grad=True)
        tsum(quadratic_reference(x)).backward()

    return step


BENCH_KERNELS = {"model": _model_step, "quadratic": _quadratic_step}


@dataclass
class ScalingResult:
    kernel: str
    T: list[int]
    seconds: list[float]

    @property
    def ratios(self) -> list[float]:
        return [b / a for a, b in zip(self.seconds, self.seconds[1:])]

    @property
    def slope(self) -> float:
        """Least-squares slope of log(time) against log(T)."""
        return float(np.polyfit(np.log(self.T), np.log(self.seconds), 1)[0])

    def rows(self) -> list[tuple]:
        ratios = [float("nan")] + self.ratios
        return [(self.kernel, t, s, r) for t, s, r in zip(self.T, self.seconds, ratios)]


def bench_scaling(config: MedMambaConfig, T_grid, repeats: int = 3, kernel: str = "model", seed: int = 0) -> ScalingResult:
    """Median forward+backward wall-clock per sequence length (batch of one)."""
    T_grid = [int(t) for t in T_grid]
    if not T_grid or any(t < 1 for t in T_grid) or any(b <= a for a, b in zip(T_grid, T_grid[1:])):
        raise ValueError("T grid must be positive and strictly ascending")
    if kernel not in BENCH_KERNELS:
        raise ValueError(f"kernel must be one of {sorted(BENCH_KERNELS)}")
    seconds = [_time_call(BENCH_KERNELS[kernel](config, t, seed), repeats) for t in T_grid]
    return ScalingResult(kernel, T_grid, seconds)


TINY_CONFIG = MedMambaConfig(D=4, L=1, d_state=4, d_conv=4, E=2, kernels=(3, 5), C=3, T=8, K=2, lambda_sp=0.01, lambda_dag=0.5, dropout=0.0)


def tiny_gradcheck(config: MedMambaConfig = TINY_CONFIG, seed: int = 0, batch: int = 2, max_coords: int | None = 6) -> float:
    """Worst relative error of the end-to-end loss gradient in float64.

    Uses the fourth-order stencil with ``h=3e-4``: larger steps pick up
    truncation error through the layer norms, smaller ones roundoff on the
    ~1e-8 gradients.
    """
    from .autodiff import grad_check

    model = init(config, seed, dtype=np.float64)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((batch, config.T, config.C))
    y = np.arange(batch) % config.K

    def loss():
        logits, _, reg = forward(model, x)
        return total_loss(logits, y, reg, model.lambda_sp, model.lambda_dag)

    return grad_check(loss, model.parameters(), h=3e-4, max_coords=max_coords, rng=rng, stencil=5)


# desk-scale settings for the directional study (one CPU core, 30 min budget)
STUDY_MODEL = MedMambaConfig(D=16, L=1, d_state=4, E=1, C=8, T=128, K=3)
STUDY_TRAIN = TrainConfig(lr=3e-3, max_epochs=6, patience=6, batch_size=32)
STUDY_VARIANTS = ("full", "no-mce", "no-tdsse", "no-sgm")


@dataclass
class StudyResult:
    f1: dict[str, list[float]]  # variant -> per-seed clean test F1
    drift: dict[str, list[list[tuple]]]  # variant -> per-seed drift curve
    missing: dict[str, list[list[tuple]]]
    ablation_seconds: float
    seconds: dict[str, float]


def run_directional_study(
    dataset: Dataset,
    model_cfg: MedMambaConfig = STUDY_MODEL,
    tcfg: TrainConfig = STUDY_TRAIN,
    variants=STUDY_VARIANTS,
    graph_variant: str = "fixed-graph",
    split_spec: SplitSpec = SplitSpec("SI"),
    log=None,
) -> StudyResult:
    """Ablations, drift curves for full vs. raw-only, missing-channel curves for adaptive vs. fixed graphs.

    ``no-tdsse`` and ``raw-only`` build the same network, so the drift
    comparison reuses the ``no-tdsse`` runs.
    """
    splits = split(dataset, split_spec)
    test = splits[2]
    f1, drift, missing, seconds = {}, {}, {}, {}
    models = {}
    for v in (*variants, graph_variant):
        t0 = time.perf_counter()
        runs = train_seeds(model_cfg.replace(variant=v), splits, tcfg)
        seconds[v] = time.perf_counter() - t0
        f1[v] = [r.test.f1 for r, _ in runs]
        models[v] = [m for _, m in runs]
        if log:
            log(f"{v}: f1 {np.round(f1[v], 3).tolist()} in {seconds[v]:.0f}s")
    for v in ("full", "no-tdsse"):
        drift[v] = [run_robustness(m, test, "drift", DRIFT_LEVELS) for m in models[v]]
    for v in ("full", graph_variant):
        missing[v] = [run_robustness(m, test, "missing", MISSING_LEVELS) for m in models[v]]
    return StudyResult(f1, drift, missing, sum(seconds[v] for v in variants), seconds)
