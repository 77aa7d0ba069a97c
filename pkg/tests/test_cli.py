"""Command-line interface: subcommands, exit codes, file flows."""

import json

import numpy as np
import pytest

from densityband.cli import main
from densityband.datasets import Scenario, generate
from densityband.rng import stream


def _write_config(tmp_path, **over):
    raw = {
        "scenario": {"kind": "homoscedastic", "d": 2},
        "n_values": [200],
        "alpha": 0.1,
        "replications": 3,
        "seed": 2,
        "test_size": 40,
        "grid_size": 256,
        "z_grid_size": 48,
        "output_dir": str(tmp_path / "out"),
        "cde": {"kind": "knn-kernel", "k": 20, "bandwidth": 0.3},
        "methods": [{"kind": "hpd"}, {"kind": "reg"}],
    }
    raw.update(over)
    p = tmp_path / "config.json"
    p.write_text(json.dumps(raw))
    return p


def test_list_enumerates_everything(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for name in ("homoscedastic", "bimodal", "heteroscedastic", "asymmetric",
                 "logistic-classification"):
        assert name in out
    for name in ("cd", "hpd", "dist", "reg", "local-reg", "quantile", "probability"):
        assert name in out


def test_simulate_writes_reports(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    assert main(["simulate", "--config", str(cfg)]) == 0
    raw = (tmp_path / "out" / "raw.csv").read_text().splitlines()
    assert raw[0].startswith("replication,method,n,d,J,marginal_coverage")
    assert len(raw) == 1 + 3 * 2  # header + replications x methods
    assert (tmp_path / "out" / "summary.csv").exists()
    assert (tmp_path / "out" / "config_echo.json").exists()


def test_simulate_flag_overrides_config(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    out2 = tmp_path / "elsewhere"
    assert main(["simulate", "--config", str(cfg), "--out", str(out2), "--seed", "9"]) == 0
    err = capsys.readouterr().err
    assert "overrides config" in err
    echo = json.loads((out2 / "config_echo.json").read_text())
    assert echo["seed"] == 9


def test_simulate_threads_do_not_change_bytes(tmp_path):
    cfg = _write_config(tmp_path, output_dir=str(tmp_path / "o1"), threads=1)
    assert main(["simulate", "--config", str(cfg)]) == 0
    cfg8 = _write_config(tmp_path, output_dir=str(tmp_path / "o8"), threads=8)
    assert main(["simulate", "--config", str(cfg8)]) == 0
    assert (tmp_path / "o1" / "raw.csv").read_bytes() == (tmp_path / "o8" / "raw.csv").read_bytes()


def test_simulate_unknown_method_exits_one_no_output(tmp_path, capsys):
    cfg = _write_config(tmp_path, methods=[{"kind": "nope"}])
    assert main(["simulate", "--config", str(cfg)]) == 1
    assert not (tmp_path / "out").exists()


def test_simulate_partial_failure_exit_code(tmp_path):
    cfg = _write_config(tmp_path, cde={"kind": "knn-kernel", "k": 5000, "bandwidth": 0.3})
    assert main(["simulate", "--config", str(cfg)]) == 2
    # rows exist but are flagged
    raw = (tmp_path / "out" / "raw.csv").read_text().splitlines()
    assert all("error:" in line for line in raw[1:])


def _write_training_csv(path, n=300, seed=4):
    sc = Scenario("homoscedastic", d=2)
    data = generate(sc, n, seed=seed)
    lines = ["x1,x2,y"]
    for x, y in zip(data.X, data.y):
        lines.append(f"{x[0]},{x[1]},{y}")
    path.write_text("\n".join(lines) + "\n")
    return data


def test_predict_three_rows(tmp_path, capsys):
    train = tmp_path / "train.csv"
    _write_training_csv(train)
    query = tmp_path / "query.csv"
    query.write_text("x1,x2\n0.0,0.0\n1.0,-1.0\n-1.0,1.0\n")
    out = tmp_path / "regions.csv"
    rc = main(
        [
            "predict",
            "--train", str(train),
            "--query", str(query),
            "--target-column", "y",
            "--method", "hpd",
            "--k", "50",
            "--out", str(out),
        ]
    )
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x1,x2,region,size,flags"
    assert len(lines) == 4
    assert ":" in lines[1].split(",")[2]


def test_predict_missing_args_exit_one(capsys):
    assert main(["predict", "--train", "nope.csv"]) == 1
    assert "error:" in capsys.readouterr().err


def test_predict_then_evaluate_roundtrip(tmp_path, capsys):
    train = tmp_path / "train.csv"
    _write_training_csv(train, n=400)
    # scenario-distributed query points let evaluate use the oracle
    sc = Scenario("homoscedastic", d=2)
    qdata = generate(sc, 25, seed=13)
    query = tmp_path / "query.csv"
    query.write_text(
        "x1,x2\n" + "\n".join(f"{x[0]},{x[1]}" for x in qdata.X) + "\n"
    )
    regions = tmp_path / "regions.csv"
    rc = main(
        [
            "predict",
            "--train", str(train),
            "--query", str(query),
            "--target-column", "y",
            "--method", "dist",
            "--k", "50",
            "--out", str(regions),
        ]
    )
    assert rc == 0
    report = tmp_path / "report.json"
    rc = main(
        [
            "evaluate",
            "--regions", str(regions),
            "--scenario", "homoscedastic",
            "--alpha", "0.1",
            "--out", str(report),
        ]
    )
    assert rc == 0
    rep = json.loads(report.read_text())
    assert rep["n_regions"] == 25
    assert 0.0 <= rep["cond_cov_abs_dev"] <= 1.0
    assert rep["mean_region_size"] > 0
    assert "mean_sym_diff" in rep


def test_evaluate_rejects_missing_region_column(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,x2\n0,0\n")
    assert main(["evaluate", "--regions", str(bad), "--scenario", "homoscedastic"]) == 1


def test_predict_classification_label_names(tmp_path, capsys):
    rng = stream(77)
    lines = ["x1,x2,species"]
    for i in range(240):
        x = rng.normal(size=2)
        label = "pos" if x[0] + 0.3 * rng.normal() > 0 else "neg"
        lines.append(f"{x[0]},{x[1]},{label}")
    train = tmp_path / "train.csv"
    train.write_text("\n".join(lines) + "\n")
    query = tmp_path / "q.csv"
    query.write_text("x1,x2\n2.0,0.0\n-2.0,0.0\n")
    out = tmp_path / "r.csv"
    rc = main(
        [
            "predict",
            "--train", str(train),
            "--query", str(query),
            "--target-column", "species",
            "--task", "classification",
            "--method", "probability",
            "--k", "40",
            "--alpha", "0.2",
            "--out", str(out),
        ]
    )
    assert rc == 0
    err = capsys.readouterr().err
    assert "label mapping" in err
    body = out.read_text().splitlines()[1:]
    assert any(("pos" in line or "neg" in line) for line in body)
