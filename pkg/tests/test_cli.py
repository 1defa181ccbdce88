import json
import subprocess
import sys

import pytest

from conftest import knapsack
from nodesel.cli import EXIT_FAILED, EXIT_USAGE, main
from nodesel.milp import write_instance


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def instance(tmp_path):
    path = tmp_path / "k.milp"
    write_instance(knapsack([8, 11, 6, 4], [5, 7, 4, 3], 14, "k"), path)
    return path


def test_usage_errors_exit_2(capsys, instance):
    for argv in ([], ["bogus"], ["generate", "--family", "tsp", "--count", 1, "--out", "x"],
                 ["generate", "--family", "gisp", "--count", 0, "--out", "x"],
                 ["solve", "--instance", instance, "--comparator", "model"],
                 ["evaluate"]):
        with pytest.raises(SystemExit) as exc:
            main([str(a) for a in argv])
        assert exc.value.code == EXIT_USAGE
    capsys.readouterr()


def test_solve_reports_and_traces(capsys, instance, tmp_path):
    code, out, _ = run(capsys, "solve", "--instance", instance, "--comparator", "dfs", "--selector", "hybrid",
                       "--trace", tmp_path / "t.jsonl")
    assert code == 0
    assert "status: optimal" in out and "objective: -21" in out
    events = [json.loads(line) for line in (tmp_path / "t.jsonl").read_text().splitlines()]
    assert events
    code, out, _ = run(capsys, "solve", "--instance", instance, "--comparator", "oracle", "--cold-start")
    assert code == 0 and "objective: -21" in out


def test_node_limit_exits_1(capsys, instance):
    code, out, _ = run(capsys, "solve", "--instance", instance, "--limit-nodes", 1)
    assert code == EXIT_FAILED and "status: node_limit" in out


def test_missing_or_malformed_inputs_exit_1(capsys, tmp_path):
    code, _, err = run(capsys, "solve", "--instance", tmp_path / "none.milp")
    assert code == EXIT_FAILED and "error" in err
    bad = tmp_path / "bad.milp"
    bad.write_text("garbage\n")
    code, _, err = run(capsys, "solve", "--instance", bad)
    assert code == EXIT_FAILED and "line" in err
    code, _, err = run(capsys, "model-describe", tmp_path)
    assert code == EXIT_FAILED and "no checkpoint" in err


def test_bad_config_exits_2(capsys, tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"suites": [{"path": "s"}], "methods": ["NOPE"]}))
    code, _, err = run(capsys, "evaluate", "--config", cfg)
    assert code == EXIT_USAGE and "config error" in err


def test_pipeline(capsys, tmp_path):
    code, out, _ = run(capsys, "generate", "--family", "maxsat", "--count", 4, "--out", tmp_path / "tr", "--seed", 3)
    assert code == 0 and "wrote 4 maxsat" in out
    assert run(capsys, "generate", "--family", "maxsat", "--count", 2, "--out", tmp_path / "te", "--seed", 4)[0] == 0
    assert run(capsys, "generate", "--family", "maxsat", "--count", 2, "--out", tmp_path / "up",
               "--size-class", "transfer", "--n-max", 13, "--seed", 5)[0] == 0
    assert json.loads((tmp_path / "up" / "manifest.json").read_text())["config"]["n_max"] == 13

    code, out, _ = run(capsys, "collect", "--instances", tmp_path / "tr", "--out", tmp_path / "ds")
    assert code == 0 and out.startswith("collected")
    code, _, _ = run(capsys, "collect", "--instances", tmp_path / "te", "--out", tmp_path / "dte", "--split", "TEST")
    assert code == 0

    code, out, _ = run(capsys, "train", "--model", "gnn", "--dataset", tmp_path / "ds", "--out", tmp_path / "gnn",
                       "--epochs", 2)
    assert code == 0 and "validation accuracy" in out
    code, out, _ = run(capsys, "evaluate", "--model", tmp_path / "gnn", "--dataset", tmp_path / "dte")
    assert code == 0 and out.startswith("accuracy: ")
    code, out, _ = run(capsys, "model-describe", tmp_path / "gnn")
    assert code == 0 and "kind: gnn" in out

    inst = next((tmp_path / "te").glob("*.milp"))
    code, out, _ = run(capsys, "solve", "--instance", inst, "--comparator", "model", "--model", tmp_path / "gnn",
                       "--selector", "hybrid")
    assert code == 0 and "status: optimal" in out

    cfg = {"suites": [{"path": "te"}, {"path": "up"}], "methods": ["PLAIN_ESTIMATE", "GNN"],
           "checkpoints": {"GNN": "gnn"}, "output": "res/results.csv", "timing": False}
    (tmp_path / "exp.json").write_text(json.dumps(cfg))
    code, out, _ = run(capsys, "evaluate", "--config", tmp_path / "exp.json", "--limit-nodes", 5000)
    assert code == 0 and "| GNN | maxsat | transfer |" in out
    assert (tmp_path / "res" / "results.csv").exists()


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "nodesel.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "model-describe" in proc.stdout
