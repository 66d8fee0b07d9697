import json

import numpy as np
import pytest

from cfens.cli import SCHEMA, main, metrics_from_doc
from cfens.detect import ZScoreDetector


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(out), "--T", "1500", "--count", "4", "--seed", "3"]) == 0
    return out / "series.csv"


def test_synth_writes_series_and_sidecar(corpus):
    assert corpus.exists()
    events = json.loads(corpus.with_suffix(".events.json").read_text())["events"]
    assert len(events) == 4


def test_detect_writes_scores(corpus, tmp_path):
    assert main(["detect", "--input", str(corpus), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "scores.csv").read_text().splitlines()
    assert lines[0] == "timestamp,score,label" and len(lines) == 1501


def test_explain_ice_report(corpus, tmp_path):
    assert main(["explain", "--input", str(corpus), "--method", "ice", "--limit", "1",
                 "--iterations", "300", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "explain_ice_000.json").read_text())
    assert doc["schema"] == SCHEMA and len(doc["members"]) >= 1
    assert all(max(m["scores"]) < doc["theta"] for m in doc["members"])
    # re-score independently from the stored window
    ctx = np.asarray(doc["window"]["context"])
    from cfens.core import Window
    for m in doc["members"]:
        scores = ZScoreDetector().score(Window(ctx, np.asarray(m["suspect"])))
        assert scores.max() < doc["theta"]


def test_report_is_self_contained(corpus, tmp_path):
    assert main(["explain", "--input", str(corpus), "--method", "dpe", "--limit", "1",
                 "--iterations", "200", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "explain_dpe_000.json").read_text())
    row = metrics_from_doc(doc)
    for key in ("distance", "impl1", "impl2", "impl3"):
        np.testing.assert_allclose(row.to_dict()[key], doc["metrics"][key], atol=1e-9)
    assert doc["maps"] and np.asarray(doc["maps"][0]).shape == (10, 1)
    assert main(["render", "--report", str(tmp_path / "explain_dpe_000.json"),
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "explain_dpe_000.svg").exists()
    assert (tmp_path / "explain_dpe_000_map.svg").exists()


def test_render_empty_ensemble(corpus, tmp_path):
    assert main(["explain", "--input", str(corpus), "--method", "ice", "--limit", "1",
                 "--iterations", "5", "--theta", "0.0", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "explain_ice_000.json").read_text())
    assert doc["members"] == []
    assert main(["render", "--report", str(tmp_path / "explain_ice_000.json"),
                 "--out", str(tmp_path)]) == 0
    assert "no counterfactual found" in (tmp_path / "explain_ice_000.svg").read_text()


def test_evaluate_four_methods(corpus, tmp_path):
    assert main(["evaluate", "--input", str(corpus), "--methods", "dpe,ice,fs,naive",
                 "--iterations", "100", "--out", str(tmp_path)]) == 0
    table = (tmp_path / "report.txt").read_text().splitlines()
    assert [l.split()[0] for l in table[2:]] == ["DPE", "ICE", "FS", "Naive"]
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["schema"] == SCHEMA and len(doc["reports"]) == 4
    assert sorted(p.name for p in tmp_path.glob("*.svg")) == \
        ["first_dpe.svg", "first_fs.svg", "first_ice.svg", "first_naive.svg"]


def test_config_file_and_flag_precedence(corpus, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"method": "ice", "iterations": 7, "limit": 1, "lr": 0.5}))
    assert main(["explain", "--config", str(cfg), "--input", str(corpus), "--lr", "0.25",
                 "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "explain_ice_000.json").read_text())
    assert doc["hyperparameters"]["iterations"] == 7
    assert doc["hyperparameters"]["learning_rate"] == 0.25


def test_unknown_config_key_is_rejected(corpus, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["explain", "--config", str(cfg), "--input", str(corpus)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: ConfigError:")


def test_module_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,dim_0\n0,nan\n")
    assert main(["detect", "--input", str(bad)]) == 1
    assert capsys.readouterr().err.startswith("error: NonFiniteValue:")


def test_tune_writes_leaderboard(corpus, tmp_path):
    assert main(["tune", "--input", str(corpus), "--method", "ice", "--iterations", "30",
                 "--grid-lambda", "0.01,0.1", "--grid-lambdaT", "0.01", "--grid-lr", "0.1",
                 "--out", str(tmp_path)]) == 0
    best = json.loads((tmp_path / "best.json").read_text())
    assert best["schema"] == SCHEMA and best["best"]["lambda1"] in (0.01, 0.1)
    assert len((tmp_path / "leaderboard.csv").read_text().splitlines()) == 3
