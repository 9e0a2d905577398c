import json
import subprocess
import sys

import numpy as np
import pytest

from greedygq.harness.cli import main
from greedygq.mdp import TabularMdp


def test_mdp_garnet_and_oracle_check(tmp_path, capsys):
    out = tmp_path / "g.json"
    assert main(["mdp", "garnet", "--ns", "10", "--na", "5", "--b", "10", "--nf", "5", "--seed", "1", "--out", str(out)]) == 0
    mdp, feats = TabularMdp.from_json(out.read_text())
    assert mdp.n_states == 10 and feats.n_features == 5
    assert np.all((mdp.transition > 0).sum(axis=2) == 10)
    capsys.readouterr()
    assert main(["oracle", "check", str(out), "--sigma", "1.0", "--radius", "10"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["all_pass"] and rep["k1"] == 2.0 and rep["radius"] == 10.0
    assert rep["mixing_rate"] < 1 and rep["lambda_min"] > 0


def test_mdp_frozenlake_stdout(capsys):
    assert main(["mdp", "frozenlake", "--nf", "4", "--slippery"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["layout_tag"] == "frozenlake4x4-slippery"
    assert np.array(doc["features"]).shape == (4, 64)


def test_oracle_check_failing_report(tmp_path, capsys):
    P = np.zeros((2, 1, 2))
    P[0, 0, 0] = P[1, 0, 1] = 1.0
    (tmp_path / "r.json").write_text(TabularMdp(P, np.ones_like(P), 0.9).to_json())
    assert main(["oracle", "check", str(tmp_path / "r.json"), "--nf", "2"]) == 1
    rep = json.loads(capsys.readouterr().out)
    assert rep["ergodic"] is False and rep["mixing_rate"] is None


def test_run_and_plot(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('name = "cli"\nn_seeds = 2\nbudget = 60\nmc_samples = 3\n[[algorithms]]\nalgorithm = "vanilla"\n')
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    band = tmp_path / "o/bands/vanilla__min_grad_norm_sq.csv"
    assert band.exists()
    assert main(["plot", "--in", str(band), "--out", str(tmp_path / "f.svg"), "--title", "t"]) == 0
    assert (tmp_path / "f.svg").read_text().count("<path ") == 3


def test_bench_smoke(tmp_path, capsys):
    assert main(["bench", "--preset", "smoke", "--out", str(tmp_path / "s")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["vanilla"]["T"] == 10


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"algorithms": [{"algorithm": "vanilla", "alpha": "x"}]}))
    assert main(["run", "--config", str(cfg)]) == 2
    assert "algorithms[0].alpha" in capsys.readouterr().err
    assert main(["bench", "--preset", "unknown"]) == 2


def test_plot_schema_error(tmp_path, capsys):
    bad = tmp_path / "b.csv"
    bad.write_text("x,y\n1,2\n")
    assert main(["plot", "--in", str(bad), "--out", str(tmp_path / "b.svg")]) == 2
    assert "columns" in capsys.readouterr().err


def test_rates_small(capsys, monkeypatch):
    monkeypatch.setenv("GGQ_THREADS", "1")
    assert main(["rates", "--algo", "vanilla", "--T", "10,30,100", "--seeds", "3"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert [p[0] for p in res["points"]] == [10.0, 30.0, 100.0]
    assert np.isfinite(res["slope"])
    assert main(["rates", "--algo", "nested"]) == 2


def test_console_script_entry():
    r = subprocess.run([sys.executable, "-m", "greedygq.harness.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for sub in ("mdp", "run", "bench", "plot", "oracle", "rates"):
        assert sub in r.stdout
