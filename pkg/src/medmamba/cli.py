"""Command-line entry point: ``medmamba <subcommand> [flags]``."""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import io
from .autodiff import no_grad
from .data import SplitSpec, SyntheticSpec, generate_synthetic, load_csv, split, standardize, write_csv
from .experiments import (
    DRIFT_LEVELS,
    MISSING_LEVELS,
    bench_scaling,
    run_ablation_suite,
    run_robustness,
    tiny_gradcheck,
)
from .metrics import METRIC_NAMES
from .model import VARIANTS, MedMambaConfig, forward, init
from .train import TrainConfig, evaluate, train

GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    pass


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def load_settings(path) -> tuple[dict, dict, dict, dict]:
    """Split a key=value file into model, training, synthetic-data and run settings."""
    raw = io.read_keyvalue(path) if path else {}
    model_keys, train_keys, synth_keys = _field_names(MedMambaConfig), _field_names(TrainConfig), _field_names(SyntheticSpec)
    run_keys = {"ratios", "standardize"}
    buckets = ({}, {}, {}, {})
    for key, value in raw.items():
        hits = [i for i, keys in enumerate((model_keys, train_keys, synth_keys, run_keys)) if key in keys]
        if not hits:
            raise UsageError(f"unknown config key {key!r}")
        for i in hits:
            buckets[i][key] = value
    for bucket in buckets[:3]:
        for key in ("kernels", "seeds", "frequencies", "rhythm_channels"):
            if key in bucket and not isinstance(bucket[key], tuple):
                bucket[key] = (bucket[key],)
    return buckets


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise UsageError(f"expected a comma list of integers, got {text!r}") from None


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise UsageError(f"expected a comma list of numbers, got {text!r}") from None


def _require(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required for {args.command}")


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _setup(args):
    model_kw, train_kw, _, run_kw = load_settings(args.config)
    dataset = load_csv(args.data)
    if run_kw.get("standardize", True):
        dataset = standardize(dataset)
    model_kw.update(C=dataset.C, T=dataset.T, K=dataset.K)
    if getattr(args, "variant", None) and args.command != "ablate":
        model_kw["variant"] = args.variant
    if args.seed is not None:
        train_kw["seeds"] = _int_list(args.seed)
    cfg = MedMambaConfig(**model_kw)
    tcfg = TrainConfig(**train_kw)
    spec = SplitSpec(args.split.upper(), run_kw.get("ratios", (0.6, 0.2, 0.2)), tcfg.seeds[0] if args.split_seed is None else args.split_seed)
    return cfg, tcfg, dataset, spec


def _metric_header():
    return ["variant", "seed", *METRIC_NAMES]


def cmd_gen_data(args) -> int:
    _require(args, "out")
    if args.spec != "default":
        raise UsageError(f"unknown synthetic spec {args.spec!r}; only 'default' is built in")
    _, _, synth_kw, _ = load_settings(args.config)
    if args.seed is not None:
        synth_kw["seed"] = _int_list(args.seed)[0]
    if "edges" in synth_kw:
        raise UsageError("edges cannot be set from a config file")
    spec = SyntheticSpec(**synth_kw)
    ds = generate_synthetic(spec)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(ds, args.out)
    print(f"wrote {len(ds)} samples (T={ds.T}, C={ds.C}, K={ds.K}) to {args.out}")
    return 0


def _export_adjacency(model, dataset, out: Path, suffix: str = "") -> list[Path]:
    with no_grad():
        _, diag, _ = forward(model, dataset.X[:256])
    written = []
    for layer, A in enumerate(diag.adjacency):
        if A is None:
            continue
        path = out / f"adjacency_{layer}{suffix}.csv"
        io.write_adjacency(path, A.mean(axis=0))
        written.append(path)
    return written


def cmd_train(args) -> int:
    _require(args, "data")
    cfg, tcfg, dataset, spec = _setup(args)
    out = _out_dir(args)
    tr, va, te = split(dataset, spec)
    epoch_rows, metric_rows = [], []
    for seed in tcfg.seeds:
        model = init(cfg.replace(seed=seed), seed)
        rec = train(model, tr, va, te, tcfg, seed=seed)
        for e in rec.epochs:
            epoch_rows.append((seed, e.epoch, e.lr, e.train_loss, e.val_loss, e.val_f1))
        metric_rows.append((cfg.variant, seed, *(getattr(rec.test, m) for m in METRIC_NAMES)))
        io.save_checkpoint(model, out / f"model_seed{seed}.ckpt")
        if seed == tcfg.seeds[0]:
            _export_adjacency(model, te, out)
        print(f"seed {seed}: best epoch {rec.best_epoch}, test f1 {rec.test.f1:.4f}, auroc {rec.test.auroc:.4f}")
    io.write_table(out / "run.csv", ["seed", "epoch", "lr", "train_loss", "val_loss", "val_f1"], epoch_rows)
    io.write_table(out / "metrics.csv", _metric_header(), metric_rows)
    f1 = np.array([r[2 + METRIC_NAMES.index("f1")] for r in metric_rows])
    print(f"test macro-F1 {f1.mean():.4f} ± {f1.std():.4f} over {len(f1)} seed(s); outputs in {out}")
    return 0


def cmd_eval(args) -> int:
    _require(args, "data", "model")
    model = io.load_checkpoint(args.model)
    dataset = load_csv(args.data)
    _, _, _, run_kw = load_settings(args.config)
    if run_kw.get("standardize", True):
        dataset = standardize(dataset)
    report = evaluate(model, dataset)
    out = _out_dir(args)
    io.write_table(out / "metrics.csv", _metric_header(), [(model.config.variant, model.config.seed, *(getattr(report, m) for m in METRIC_NAMES))])
    _export_adjacency(model, dataset, out)
    print("  ".join(f"{m} {getattr(report, m):.4f}" for m in METRIC_NAMES))
    return 0


def cmd_ablate(args) -> int:
    _require(args, "data")
    if args.split.upper() != "SI":
        raise UsageError("ablate runs on the subject-independent split only")
    cfg, tcfg, dataset, spec = _setup(args)
    variants = tuple(args.variant.split(",")) if args.variant else VARIANTS
    table = run_ablation_suite(cfg, dataset, tcfg, variants, spec)
    out = _out_dir(args)
    io.write_table(out / "metrics.csv", _metric_header(), table.rows())
    io.write_table(out / "ablation.csv", ["variant", "metric", "mean", "std", "delta_vs_full"], table.summary())
    for variant, metric, mu, sd, delta in table.summary():
        if metric == "f1":
            print(f"{variant:12s} f1 {mu:.4f} ± {sd:.4f}  (full - variant {delta:+.4f})")
    return 0


def cmd_robustness(args) -> int:
    _require(args, "data")
    cfg, tcfg, dataset, spec = _setup(args)
    tr, va, te = split(dataset, spec)
    default = DRIFT_LEVELS if args.protocol == "drift" else MISSING_LEVELS
    levels = _float_list(args.levels) if args.levels else default
    if args.model:
        loaded = io.load_checkpoint(args.model)
        models = [(loaded, loaded.config.seed)]
    else:
        models = []
        for seed in tcfg.seeds:
            m = init(cfg.replace(seed=seed), seed)
            train(m, tr, va, None, tcfg, seed=seed)
            models.append((m, seed))
    rows = []
    for model, seed in models:
        for level, f1, auroc in run_robustness(model, te, args.protocol, levels, seed=args.perturb_seed):
            rows.append((model.config.variant, seed, args.protocol, level, f1, auroc))
            print(f"seed {seed} {args.protocol} {level:g}: f1 {f1:.4f} auroc {auroc:.4f}")
    io.write_table(_out_dir(args) / "curve.csv", ["variant", "seed", "protocol", "level", "f1", "auroc"], rows)
    return 0


def cmd_bench(args) -> int:
    model_kw, _, _, _ = load_settings(args.config)
    grid = _int_list(args.T)
    cfg = MedMambaConfig(**{"T": grid[0], **model_kw})
    res = bench_scaling(cfg, grid, args.repeats, args.kernel)
    io.write_table(_out_dir(args) / "bench.csv", ["kernel", "T", "seconds", "ratio_vs_prev"], res.rows())
    for kernel, t, s, r in res.rows():
        print(f"{kernel} T={t}: {s:.4f}s  ratio {r:.3f}")
    if len(grid) > 1:
        print(f"log-log slope {res.slope:.3f}")
    return 0


def cmd_gradcheck(args) -> int:
    err = tiny_gradcheck(max_coords=None)
    ok = err < GRADCHECK_TOL
    print(f"max relative error {err:.3e} ({'ok' if ok else 'FAIL'}, tolerance {GRADCHECK_TOL:g})")
    return 0 if ok else 1


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "robustness": cmd_robustness,
    "bench": cmd_bench,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value settings file")
    common.add_argument("--out", help="output directory (gen-data: output CSV path)")
    common.add_argument("--seed", help="seed or comma list of seeds")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="dataset CSV")
    data.add_argument("--split", choices=("sd", "si", "SD", "SI"), default="si")
    data.add_argument("--split-seed", type=int, default=None, help="defaults to the first training seed")

    p = argparse.ArgumentParser(prog="medmamba", description="Train and probe the state-space medical time-series classifier.")
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset CSV")
    g.add_argument("--spec", default="default")
    t = sub.add_parser("train", parents=[common, data], help="train over seeds; writes run.csv, metrics.csv")
    t.add_argument("--variant", choices=VARIANTS, default=None)
    e = sub.add_parser("eval", parents=[common, data], help="evaluate a checkpoint; writes metrics.csv")
    e.add_argument("--model", help="checkpoint path")
    a = sub.add_parser("ablate", parents=[common, data], help="ablation suite; writes metrics.csv, ablation.csv")
    a.add_argument("--variant", help="comma list of variant tags (default: all)")
    r = sub.add_parser("robustness", parents=[common, data], help="drift or missing-channel curve; writes curve.csv")
    r.add_argument("--protocol", choices=("drift", "missing"), default="drift")
    r.add_argument("--levels", help="comma list of perturbation levels")
    r.add_argument("--model", help="checkpoint to evaluate (trains one per seed if omitted)")
    r.add_argument("--variant", choices=VARIANTS, default=None)
    r.add_argument("--perturb-seed", type=int, default=0)
    b = sub.add_parser("bench", parents=[common], help="forward+backward timing per T; writes bench.csv")
    b.add_argument("--T", default="256,512,1024", help="ascending comma list of lengths")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--kernel", choices=("model", "quadratic"), default="model")
    sub.add_parser("gradcheck", help="finite-difference check of the tiny float64 model")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"medmamba {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to exit 1
        print(f"medmamba {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
