import json

import pytest

from cardioscope import __version__
from cardioscope.cli import build_parser, main
from cardioscope.evaluation import read_csv


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    return json.loads(err.strip().splitlines()[-1])


def test_unknown_command(capsys):
    code, _, err = run(["frobnicate"], capsys)
    assert code != 0 and error_of(err)["error"] == "UnknownCommand"


def test_missing_data_dir(capsys, tmp_path, monkeypatch):
    monkeypatch.delenv("CARDIOSCOPE_DATA_DIR", raising=False)
    code, _, err = run(["ingest", "--out", str(tmp_path)], capsys)
    e = error_of(err)
    assert code == 3 and e["error"] == "DataMissing"
    assert "PhysioNet" in e["message"]


def test_seed_is_mandatory_for_training(capsys, tmp_path):
    code, _, _ = run(["train-ml", "--features", "x.csv", "--preset", "dt"], capsys)
    assert code == 2


def test_bad_config_file(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    code, _, err = run(["evaluate", "--config", str(cfg)], capsys)
    assert code == 2 and error_of(err)["error"] == "ConfigInvalid"


@pytest.fixture
def features_csv(physionet_tree, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CARDIOSCOPE_DATA_DIR", str(physionet_tree))
    out = tmp_path / "feat"
    assert run(["extract-features", "--out", str(out)], capsys)[0] == 0
    return out / "features.csv"


def test_ingest_writes_manifest_and_splits(physionet_tree, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CARDIOSCOPE_DATA_DIR", str(physionet_tree))
    out = tmp_path / "ing"
    code, stdout, _ = run(["ingest", "--out", str(out), "--seed", "3"], capsys)
    assert code == 0
    res = json.loads(stdout)["result"]
    assert res["records"] == 30 and sum(res["split"]) == 30
    assert (out / "split_E.json").exists()
    doc = json.loads((out / "config.json").read_text())
    assert doc["version"] == f"cardioscope {__version__}" and doc["config"]["seed"] == 3


def test_feature_pipeline_end_to_end(features_csv, tmp_path, capsys):
    rows = read_csv(features_csv)
    assert len(rows) == 30 and len(rows[0]) == 195
    out = tmp_path / "ml"
    code, stdout, _ = run(["train-ml", "--features", str(features_csv), "--preset", "dt",
                           "--seed", "0", "--out", str(out)], capsys)
    assert code == 0
    report = read_csv(out / "report.csv")
    assert [r["method"] for r in report] == ["dt:val", "dt:test"]
    first = (out / "report.csv").read_text()
    run(["train-ml", "--features", str(features_csv), "--preset", "dt", "--seed", "0",
         "--out", str(out)], capsys)
    assert (out / "report.csv").read_text() == first


def test_balance(features_csv, tmp_path, capsys):
    out = tmp_path / "bal"
    code, stdout, _ = run(["balance", "--features", str(features_csv), "--seed", "1",
                           "--out", str(out)], capsys)
    assert code == 0
    rows = read_csv(out / "balanced.csv")
    labels = [r["label"] for r in rows]
    assert "-1" not in labels and labels.count("0") == labels.count("1") == 20
    assert sum(r["synthetic"] == "1" for r in rows) == json.loads(stdout)["result"]["synthetic"]


def test_train_dl_with_config_override(features_csv, tmp_path, capsys):
    cfg = tmp_path / "dl.json"
    cfg.write_text(json.dumps({"epochs": 5, "batch": 8, "model": "dense"}))
    out = tmp_path / "dl"
    code, _, _ = run(["train-dl", "--config", str(cfg), "--epochs", "2", "--features",
                      str(features_csv), "--seed", "0", "--out", str(out)], capsys)
    assert code == 0
    assert len(read_csv(out / "history.csv")) == 2
    doc = json.loads((out / "config.json").read_text())
    assert doc["config"]["epochs"] == 2 and doc["config"]["batch"] == 8


def test_evaluate(tmp_path, capsys):
    pred = tmp_path / "p.csv"
    pred.write_text("label,score\n0,0.1\n0,0.7\n1,0.8\n1,0.4\n")
    code, stdout, _ = run(["evaluate", "--predictions", str(pred), "--out", str(tmp_path)], capsys)
    res = json.loads(stdout)["result"]
    assert code == 0 and res["macc"] == 0.5 and res["auroc"] == 0.75


def test_anomaly_grid_synthetic(tmp_path, capsys):
    out = tmp_path / "an"
    code, _, _ = run(["anomaly-grid", "--synthetic", "--seed", "0", "--epochs", "1",
                      "--ae-training", "normal_only", "--out", str(out)], capsys)
    assert code == 0
    assert len(read_csv(out / "anomaly_normal_only.csv")) == 8


def test_train_ssl_and_sweep_synthetic(tmp_path, capsys):
    out = tmp_path / "ssl"
    code, stdout, _ = run(["train-ssl", "--synthetic", "--seed", "0", "--epochs", "1",
                           "--steps-per-epoch", "2", "--count", "4", "--out", str(out)], capsys)
    assert code == 0 and 0 <= json.loads(stdout)["result"]["auroc"] <= 1
    out = tmp_path / "sw"
    code, _, _ = run(["sweep", "--synthetic", "--seed", "0", "--grid", "4", "--seeds", "1",
                      "--epochs", "1", "--steps-per-epoch", "1", "--out", str(out)], capsys)
    assert code == 0
    assert [r["arm"] for r in read_csv(out / "sweep.csv")] == ["ssl_gan", "supervised"]
    assert (out / "sweep.svg").read_text().startswith("<svg")


def test_parser_lists_every_command():
    text = build_parser().format_help()
    for cmd in ("ingest", "extract-features", "balance", "train-ml", "train-dl", "train-ssl",
                "anomaly-grid", "evaluate", "sweep", "selftest"):
        assert cmd in text
