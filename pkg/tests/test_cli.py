import csv
import json

import pytest
import yaml

from glnn.cli import EXIT_CONFIG, EXIT_IO, main, sweep_cells
from glnn.config import build_config, load_config


def write_cfg(path, data):
    path.write_text(json.dumps(data))
    return path


SMALL = {"datagen": {"n_traj": 4, "n_steps": 50}, "model": {"hidden_size": 16, "n_hidden_layers": 2}, "train": {"epochs": 3}}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("small")
    cfg = write_cfg(d / "run.json", SMALL)
    assert main(["generate", "--config", str(cfg), "--out", str(d / "data.csv")]) == 0
    assert main(["train", "--config", str(cfg), "--data", str(d / "data.csv"), "--out", str(d / "model.json")]) == 0
    return d, cfg


def n_rows(path):
    return sum(1 for _ in open(path)) - 2


@pytest.mark.parametrize("system, pairs", [("dho", 8000), ("dp", 10000)])
def test_generate_defaults(tmp_path, capsys, system, pairs):
    cfg = write_cfg(tmp_path / "c.json", {"system": system})
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "d.csv")]) == 0
    assert n_rows(tmp_path / "d.csv") == pairs
    out = capsys.readouterr().out
    assert f"wrote {pairs} pairs" in out and "non-increasing along trajectories: yes" in out
    assert (tmp_path / "d.csv.meta.json").exists() and (tmp_path / "d.config.json").exists()


def test_generate_without_config_uses_dho(tmp_path):
    assert main(["generate", "--preset", "smoke", "--out", str(tmp_path / "d.csv")]) == 0
    assert n_rows(tmp_path / "d.csv") == 4 * 200


def test_invalid_range_is_config_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", {"datagen": {"init_range": [1.0, -1.0]}})
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "d.csv")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert not (tmp_path / "d.csv").exists()


@pytest.mark.parametrize(
    "raw",
    [{"train": {"epoch": 3}}, {"optimizer": {}}, {"params": {"mass": 2.0}}, {"train": {"epochs": "many"}}, {"system": "cartpole"}],
)
def test_bad_config_rejected(tmp_path, raw):
    cfg = write_cfg(tmp_path / "c.json", raw)
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "d.csv")]) == EXIT_CONFIG


def test_yaml_config(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"system": "dp", "params": {"g": 9.81}, "train": {"epochs": 7}}))
    cfg = load_config(path)
    assert cfg.system == "dp" and cfg.system_params().g == 9.81 and cfg.train.epochs == 7
    assert cfg.datagen.n_traj == 20 and cfg.datagen.h == 0.02 and cfg.model.n_hidden_layers == 4


def test_defaults_follow_training_table():
    cfg = build_config()
    t = cfg.train
    assert (t.learning_rate, t.batch_size, t.epochs, t.loss_kind) == (1e-3, 1000, 300, "acceleration")
    assert (cfg.model.hidden_size, cfg.model.n_hidden_layers) == (200, 3)


def test_seed_override():
    cfg = build_config({}, seed=7)
    assert cfg.datagen.seed == cfg.model.seed == cfg.train.seed == 7
    assert cfg.sweep.seeds == [7, 8, 9]


def test_missing_config_file(tmp_path):
    assert main(["generate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "d.csv")]) == EXIT_IO


def test_train_writes_model_and_metrics(small_run):
    d, _ = small_run
    metrics = json.loads((d / "model.metrics.json").read_text())
    assert metrics["model_kind"] == "glnn"
    assert len(metrics["train_loss"]) == len(metrics["test_loss"]) == 3
    model = json.loads((d / "model.json").read_text())
    assert model["model_kind"] == "glnn" and model["meta"]["system"] == "dho"


def test_baseline_metrics_schema_parity(small_run, tmp_path):
    d, _ = small_run
    cfg = write_cfg(tmp_path / "b.json", {**SMALL, "model": {**SMALL["model"], "kind": "baseline"}})
    out = tmp_path / "base.json"
    assert main(["train", "--config", str(cfg), "--data", str(d / "data.csv"), "--out", str(out)]) == 0
    base = json.loads((tmp_path / "base.metrics.json").read_text())
    glnn = json.loads((d / "model.metrics.json").read_text())
    assert set(base) == set(glnn)
    assert base["model_kind"] == "baseline"


def test_train_missing_dataset(tmp_path, capsys):
    rc = main(["train", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "m.json")])
    assert rc == EXIT_IO
    assert "missing.csv" in capsys.readouterr().err


def test_train_system_mismatch(small_run, tmp_path):
    d, _ = small_run
    cfg = write_cfg(tmp_path / "c.json", {"system": "dp"})
    assert main(["train", "--config", str(cfg), "--data", str(d / "data.csv"), "--out", str(tmp_path / "m.json")]) == EXIT_CONFIG


def test_evaluate_curves(small_run, tmp_path):
    d, cfg = small_run
    outs = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for out in outs:
        assert main(["evaluate", "--config", str(cfg), "--model", str(d / "model.json"), "--out", str(out)]) == 0
    with open(outs[0]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "truth_q1", "pred_q1", "truth_E", "pred_E"]
    assert len(rows) - 1 == 1001
    assert float(rows[-1][0]) == pytest.approx(50.0)
    assert outs[0].read_bytes() == outs[1].read_bytes()
    summary = json.loads((tmp_path / "a.summary.json").read_text())
    assert len(summary["energy_mse_curve"]) == 1001
    assert {"position_mse_mean", "energy_mse_mean", "energy_mse_final"} <= set(summary)


def test_evaluate_dimension_mismatch(small_run, tmp_path):
    d, _ = small_run
    cfg = write_cfg(tmp_path / "c.json", {"system": "dp"})
    rc = main(["evaluate", "--config", str(cfg), "--model", str(d / "model.json"), "--out", str(tmp_path / "e.csv")])
    assert rc == EXIT_CONFIG


def test_evaluate_corrupt_model(tmp_path):
    (tmp_path / "m.json").write_text("{not json")
    assert main(["evaluate", "--model", str(tmp_path / "m.json"), "--out", str(tmp_path / "e.csv")]) == EXIT_IO


def test_sweep_grid(tmp_path, capsys):
    raw = {"datagen": {"n_traj": 2, "n_steps": 20}, "train": {"epochs": 1}, "sweep": {"seeds": [0]}}
    cfg = write_cfg(tmp_path / "s.json", raw)
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8 == len(sweep_cells(build_config(raw)))
    assert [r["hidden_size"] for r in rows[:4]] == ["50", "100", "200", "400"]
    assert [r["n_hidden_layers"] for r in rows[4:]] == ["2", "3", "4", "5"]
    for r in rows:
        assert r["seeds"] == "0" and float(r["median_test_mse"]) == float(r["test_mse"])
    # the 200 x 3 cell appears in both tables and is trained once
    assert rows[2]["test_mse"] == rows[5]["test_mse"]
    printed = capsys.readouterr().out
    assert "Influence of hidden size" in printed and "Influence of layers" in printed


def test_config_round_trip(small_run):
    d, cfg = small_run
    original = load_config(cfg)
    dumped = load_config(d / "model.config.json")
    assert dumped.to_dict() == original.to_dict()
