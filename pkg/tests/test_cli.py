import json

import numpy as np
import pytest

from community_gnar import make_community_order, model_to_json
from community_gnar.cli import run
from community_gnar.experiments import FIVE_NODE_EDGES, FIVE_NODE_THETA


@pytest.fixture
def five_node_files(tmp_path):
    (tmp_path / "edges.csv").write_text("from,to\n" + "".join(f"{a},{b}\n" for a, b in FIVE_NODE_EDGES))
    (tmp_path / "comm.csv").write_text("node,community\n1,2\n2,1\n3,1\n4,1\n5,2\n")
    order = make_community_order([1, 2], [[1], [1, 1]])
    (tmp_path / "model.json").write_text(model_to_json(order, np.array(FIVE_NODE_THETA)))
    (tmp_path / "order.json").write_text(model_to_json(order))
    return tmp_path


def net_args(d):
    return ["--edges", str(d / "edges.csv"), "--communities", str(d / "comm.csv")]


def test_usage_errors(capsys, tmp_path):
    assert run([]) == 2
    assert run(["fit", "--bogus"]) == 2
    assert run(["nosuch"]) == 2
    assert run(["nacf", "--edges", str(tmp_path / "missing.csv"), "--panel",
                str(tmp_path / "missing.csv")]) == 2


def test_bad_input_file(tmp_path, five_node_files):
    (tmp_path / "bad.csv").write_text("node,time,value\n1,1,abc\n")
    assert run(["fit", "--panel", str(tmp_path / "bad.csv"), "--order", str(tmp_path / "order.json")]
               + net_args(tmp_path)) == 2


def test_simulate_then_fit_round_trip(five_node_files, capsys):
    d = five_node_files
    assert run(["simulate", "--model", str(d / "model.json"), "-T", "2000", "--seed", "3",
                "--out-dir", str(d)] + net_args(d)) == 0
    assert run(["fit", "--panel", str(d / "panel.csv"), "--order", str(d / "order.json"),
                "--format", "json", "--out-dir", str(d / "fit")] + net_args(d)) == 0
    doc = json.loads((d / "fit" / "fit.json").read_text())
    est = [c["estimate"] for c in doc["coefficients"]]
    assert np.max(np.abs(np.array(est) - FIVE_NODE_THETA)) < 0.1
    assert "Estimate" in capsys.readouterr().out
    # the same seed reproduces the panel byte for byte
    first = (d / "panel.csv").read_bytes()
    run(["simulate", "--model", str(d / "model.json"), "-T", "2000", "--seed", "3",
         "--out-dir", str(d)] + net_args(d))
    assert (d / "panel.csv").read_bytes() == first
    assert run(["forecast", "--panel", str(d / "panel.csv"), "--model", str(d / "fit" / "model.json"),
                "--holdout", "1", "--out-dir", str(d / "fc")] + net_args(d)) == 0
    assert set(json.loads((d / "fc" / "rmspe.json").read_text())) == {"rmspe", "naive_rmspe"}
    assert run(["bound", "--panel", str(d / "panel.csv"), "--model", str(d / "model.json"),
                "--true-theta", "--out-dir", str(d / "b")] + net_args(d)) == 0
    assert "deterministic_bound" in json.loads((d / "b" / "bound.json").read_text())


def test_stationarity_and_corbit(five_node_files):
    d = five_node_files
    assert run(["stationarity", "--model", str(d / "model.json"), "--out-dir", str(d / "s")]
               + net_args(d)) == 0
    doc = json.loads((d / "s" / "stationarity.json").read_text())
    assert doc["sufficient"]["passed"] and doc["companion"]["passed"]
    run(["simulate", "--model", str(d / "model.json"), "-T", "300", "--out-dir", str(d)] + net_args(d))
    assert run(["corbit", "--panel", str(d / "panel.csv"), "--max-lag", "3", "--max-stage", "2",
                "--out-dir", str(d / "c")] + net_args(d)) == 0
    assert (d / "c" / "pnacf_corbit.svg").read_text().startswith("<svg")
    assert len((d / "c" / "pnacf.csv").read_text().splitlines()) == 1 + 3 * 2 * 3
    assert run(["nacf", "--panel", str(d / "panel.csv"), "--svg", "--out-dir", str(d / "n"),
                "--edges", str(d / "edges.csv")]) == 0
    assert (d / "n" / "nacf.svg").exists()


def test_study_command(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"T_grid": [40], "replications": 2, "model": "five_node"}))
    assert run(["study", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    assert len((tmp_path / "recovery.csv").read_text().splitlines()) == 1 + 2 * 3
    cfg.write_text(json.dumps({"bad_key": 1}))
    assert run(["study", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2


def test_election_command(tmp_path, capsys):
    assert run(["election", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "alpha[1,1]" in out and "rmspe_raw" in out
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["community_sizes"] == [22, 11, 18]
