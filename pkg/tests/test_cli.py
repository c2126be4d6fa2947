import numpy as np
import pytest

from medmamba import io
from medmamba.cli import main

SETTINGS = """\
# tiny run
K=3
C=8
T=32
subjects_per_class=3
samples_per_subject=2
D=4
L=1
d_state=2
E=1
kernels=3
max_epochs=2
patience=2
batch_size=8
seeds=0
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.cfg"
    cfg.write_text(SETTINGS)
    data = root / "d.csv"
    assert main(["gen-data", "--spec", "default", "--config", str(cfg), "--out", str(data)]) == 0
    return root, cfg, data


def run(workspace, *argv):
    root, cfg, data = workspace
    return main([argv[0], "--config", str(cfg), "--data", str(data), *argv[1:]])


def test_gen_data_then_train(workspace):
    root = workspace[0]
    assert run(workspace, "train", "--out", str(root / "t")) == 0
    header, rows = io.read_table(root / "t" / "run.csv")
    assert header == ["seed", "epoch", "lr", "train_loss", "val_loss", "val_f1"] and len(rows) == 2
    header, rows = io.read_table(root / "t" / "metrics.csv")
    assert header[:2] == ["variant", "seed"] and len(rows) == 1
    adj = io.read_table(root / "t" / "adjacency_0.csv")
    assert len(adj[1]) == 8 and adj[1][0][1] == "0"
    assert (root / "t" / "model_seed0.ckpt").exists()


def test_run_csv_is_reproducible(workspace):
    root = workspace[0]
    for name in ("a", "b"):
        assert run(workspace, "train", "--out", str(root / name), "--seed", "1") == 0
    assert (root / "a" / "run.csv").read_bytes() == (root / "b" / "run.csv").read_bytes()


def test_eval_reads_the_checkpoint(workspace):
    root = workspace[0]
    if not (root / "t" / "model_seed0.ckpt").exists():
        run(workspace, "train", "--out", str(root / "t"))
    assert run(workspace, "eval", "--model", str(root / "t" / "model_seed0.ckpt"), "--out", str(root / "e")) == 0
    header, rows = io.read_table(root / "e" / "metrics.csv")
    assert len(rows) == 1 and all(0.0 <= float(v) <= 1.0 for v in rows[0][2:])


def test_robustness_curve(workspace):
    root = workspace[0]
    assert run(workspace, "robustness", "--protocol", "missing", "--levels", "0,0.25", "--out", str(root / "r")) == 0
    header, rows = io.read_table(root / "r" / "curve.csv")
    assert header == ["variant", "seed", "protocol", "level", "f1", "auroc"]
    assert [float(r[3]) for r in rows] == [0.0, 0.25]


def test_ablate_writes_deltas(workspace):
    root = workspace[0]
    assert run(workspace, "ablate", "--variant", "full,no-sgm", "--out", str(root / "a2")) == 0
    header, rows = io.read_table(root / "a2" / "ablation.csv")
    deltas = {(r[0], r[1]): float(r[4]) for r in rows}
    assert deltas[("full", "f1")] == 0.0 and ("no-sgm", "auroc") in deltas


def test_bench_rows(tmp_path):
    assert main(["bench", "--T", "16,32,64", "--repeats", "1", "--out", str(tmp_path)]) == 0
    header, rows = io.read_table(tmp_path / "bench.csv")
    assert header == ["kernel", "T", "seconds", "ratio_vs_prev"] and [r[1] for r in rows] == ["16", "32", "64"]


def test_gradcheck_exit_code(capsys):
    assert main(["gradcheck"]) == 0
    assert "max relative error" in capsys.readouterr().out


def test_exit_codes(tmp_path, workspace):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--bogus-flag"])
    assert exc.value.code == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("learning_speed=3\n")
    assert main(["train", "--config", str(bad), "--data", str(workspace[2])]) == 2
    assert main(["train"]) == 2
    assert main(["train", "--data", str(tmp_path / "missing.csv")]) == 1
    garbage = tmp_path / "g.csv"
    garbage.write_text("2,2,2\n0,1\n1,2\n")
    assert main(["eval", "--data", str(garbage), "--model", str(garbage)]) == 1
