import csv
import json
from pathlib import Path

import numpy as np
import pytest

from msformer import autodiff
from msformer.cli import main, parse_seeds
from msformer.harness import read_predictions

TINY_INI = """
[data]
kind = synthetic
n_units = 5
n_test_units = 4
n_features = 3

[model]
window_len = 8
embed_dim = 8
heads = 2
lambda_schedule = [2, 2, 2, 1]
c1 = 2

[train]
epochs = 2
batch_size = 32
"""


@pytest.fixture
def spec(tmp_path):
    p = tmp_path / "tiny.ini"
    p.write_text(TINY_INI + f"\n[output]\ndir = {tmp_path / 'runs'}\n")
    return p


def run_dirs(root: Path):
    return sorted(d for d in root.iterdir() if d.is_dir())


def test_parse_seeds():
    assert parse_seeds("1..5") == [1, 2, 3, 4, 5]
    assert parse_seeds("3,1") == [3, 1]
    assert parse_seeds(None) is None


def test_train_writes_all_artifacts(spec, tmp_path):
    assert main(["-q", "train", "--config", str(spec), "--override", "model.c1=3"]) == 0
    (run,) = run_dirs(tmp_path / "runs")
    for f in ("config.ini", "metrics.json", "predictions.csv", "checkpoint/manifest.json", "checkpoint/params.bin",
              "checkpoint/normstats.json", "checkpoint/config.ini"):
        assert (run / f).is_file(), f
    assert "c1 = 3" in (run / "config.ini").read_text()


def test_eval_reproduces_training_metrics_bitwise(spec, tmp_path):
    main(["-q", "train", "--config", str(spec)])
    (run,) = run_dirs(tmp_path / "runs")
    assert main(["-q", "eval", "--checkpoint", str(run), "--out", str(tmp_path / "ev")]) == 0
    trained = json.loads((run / "metrics.json").read_text())
    evald = json.loads((tmp_path / "ev" / "metrics.json").read_text())
    for k in ("rmse", "mae", "score"):
        assert evald[k] == trained[k]
    assert (tmp_path / "ev" / "predictions.csv").read_bytes() == (run / "predictions.csv").read_bytes()


def test_replay_from_snapshot_is_identical(spec, tmp_path):
    main(["-q", "train", "--config", str(spec)])
    (first,) = run_dirs(tmp_path / "runs")
    main(["-q", "train", "--config", str(first / "config.ini"), "--out", str(tmp_path / "replay")])
    (second,) = run_dirs(tmp_path / "replay")
    a = json.loads((first / "metrics.json").read_text())
    b = json.loads((second / "metrics.json").read_text())
    assert a["train_loss"] == b["train_loss"] and a["rmse"] == b["rmse"] and a["fingerprint"] == b["fingerprint"]


def test_multi_seed_summary(spec, tmp_path, capsys):
    assert main(["-q", "train", "--config", str(spec), "--seed", "1..3"]) == 0
    summary = json.loads((tmp_path / "runs" / "summary.json").read_text())
    assert summary["seeds"] == [1, 2, 3] and summary["n"] == 3
    assert summary["rmse"]["std"] >= 0
    assert "±" in capsys.readouterr().out


def test_eval_missing_normstats_exit_4(spec, tmp_path):
    main(["-q", "train", "--config", str(spec)])
    (run,) = run_dirs(tmp_path / "runs")
    (run / "checkpoint" / "normstats.json").unlink()
    assert main(["-q", "eval", "--checkpoint", str(run)]) == 4


def test_eval_model_mismatch_exit_4(spec, tmp_path):
    main(["-q", "train", "--config", str(spec)])
    (run,) = run_dirs(tmp_path / "runs")
    assert main(["-q", "eval", "--checkpoint", str(run), "--override", "model.embed_dim=4"]) == 4


def test_invalid_spec_exit_2(spec):
    assert main(["-q", "train", "--config", str(spec), "--override", "model.c3=1"]) == 2
    assert main(["-q", "train", "--config", str(spec), "--override", "model.heads=3"]) == 2


def test_data_error_exit_3(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text(f"[data]\nkind = cmapss\npath = {tmp_path / 'nowhere'}\n[output]\ndir = {tmp_path}\n")
    assert main(["-q", "train", "--config", str(bad)]) == 3


def _write_csv(path: Path, units, seed):
    rng = np.random.default_rng(seed)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit", "cycle", "a", "b"])
        for uid, T in units:
            for c in range(1, T + 1):
                w.writerow([uid, c, c / T + 0.01 * rng.normal(), rng.normal()])


def test_csv_adapter_train_and_eval(tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    _write_csv(data / "train.csv", [(1, 30), (2, 25)], 0)
    _write_csv(data / "test.csv", [(7, 20), (8, 12)], 1)
    (data / "rul.txt").write_text("5\n11\n")
    before = {p.name: p.read_bytes() for p in data.iterdir()}
    ini = tmp_path / "csv.ini"
    ini.write_text(
        TINY_INI.replace("kind = synthetic", f"kind = csv\npath = {data / 'train.csv'}\ntest_path = {data / 'test.csv'}"
                         f"\ntest_rul_path = {data / 'rul.txt'}") + f"\n[output]\ndir = {tmp_path / 'runs'}\n"
    )
    assert main(["-q", "train", "--config", str(ini)]) == 0
    (run,) = run_dirs(tmp_path / "runs")
    assert main(["-q", "eval", "--checkpoint", str(run), "--config", str(ini), "--out", str(tmp_path / "ev")]) == 0
    rows = read_predictions(tmp_path / "ev" / "predictions.csv")
    assert [(r[0], r[2]) for r in rows] == [(7, 5.0), (8, 11.0)]
    assert {p.name: p.read_bytes() for p in data.iterdir()} == before


def test_ablate_unknown_study_exit_2(spec):
    assert main(["-q", "ablate", "nonsense", "--config", str(spec)]) == 2


def test_ablate_ms_stages_table(spec, tmp_path):
    assert main(["-q", "ablate", "ms-stages", "--config", str(spec), "--override", "train.epochs=1"]) == 0
    (out,) = [d for d in run_dirs(tmp_path / "runs") if d.name.startswith("ablate-ms-stages")]
    rows = json.loads((out / "comparison.json").read_text())
    assert len(rows) == 8
    assert {r["lambda_schedule"] for r in rows} >= {"1-1-1-1", "2-2-2-1"}
    assert (out / "comparison.md").read_text().count("\n| MS@") == 8


def test_selfcheck_reports_param_count(capsys):
    assert main(["-q", "selfcheck", "--only", "param_count"]) == 0
    assert "533005 params" in capsys.readouterr().out


def test_selfcheck_names_injected_gradient_bug(monkeypatch, capsys):
    good = autodiff._gelu_grad
    monkeypatch.setattr(autodiff, "_gelu_grad", lambda x, cdf: -good(x, cdf))
    assert main(["-q", "selfcheck", "--only", "gradients"]) == 1
    out = capsys.readouterr().out
    assert "FAILED invariant: gradient fidelity" in out and "gelu" in out
