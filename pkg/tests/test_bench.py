import json
import math
from fractions import Fraction

import pytest

from conftest import knapsack
from nodesel.bench import (
    CSV_COLUMNS,
    ConfigError,
    ExperimentConfig,
    InstanceResult,
    SuiteRef,
    aggregate,
    geo_std,
    read_rows,
    rows_csv,
    run_experiment,
    shifted_geomean,
)
from nodesel.bnb import HybridSelector, estimate_comp, solve
from nodesel.generators import GenConfig, gen_suite
from nodesel.milp import write_instance


def test_shifted_geomean_exact_values():
    assert shifted_geomean([3, 8], 1) == 5.0
    assert shifted_geomean([4.0]) == 4.0
    assert shifted_geomean([0, 0, 0]) == 0.0
    assert geo_std([7, 7, 7]) == 1.0
    assert geo_std([2.5]) == 1.0
    # (1+1)(3+1)(15+1) = 128, cube root 2^(7/3)
    assert shifted_geomean([1, 3, 15]) == pytest.approx(2 ** (7 / 3) - 1, rel=1e-15)


def test_shifted_geomean_against_exact_products():
    values = [0, 1, 2, 5, 10, 40, 333]
    prod = math.prod(Fraction(v + 1) for v in values)
    ref = float(prod) ** (1 / len(values)) - 1
    assert shifted_geomean(values) == pytest.approx(ref, rel=1e-14)
    # large counts go through logs without overflow
    big = [1e200, 1e200]
    assert shifted_geomean(big) == pytest.approx(1e200, rel=1e-12)
    assert geo_std([0, 3]) == pytest.approx(math.exp(math.log(4) / 2))


def test_metric_input_errors():
    for fn in (shifted_geomean, geo_std):
        with pytest.raises(ValueError):
            fn([])
        with pytest.raises(ValueError):
            fn([1, -1])
        with pytest.raises(ValueError):
            fn([math.nan])


def _config(**over):
    d = {"suites": [{"path": "suite"}], "methods": ["PLAIN_ESTIMATE"]}
    d.update(over)
    return d


@pytest.mark.parametrize("bad, msg", [
    (_config(extra=1), "unknown config keys"),
    (_config(methods=["FASTEST"]), "unknown method"),
    (_config(methods=["GNN"]), "needs a checkpoint"),
    (_config(limits={"nodes": 0}), "nodes must be positive"),
    (_config(limits={"seconds": -1}), "seconds must be positive"),
    (_config(jobs=0), "jobs"),
    (_config(suites=[]), "no instance suites"),
    ({"methods": ["ORACLE"]}, "suites"),
    (_config(version=7), "version"),
])
def test_config_errors(bad, msg):
    with pytest.raises(ConfigError, match=msg):
        ExperimentConfig.from_json(bad)


def test_config_paths_resolve_against_config_dir(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(_config(checkpoints={"GNN": {"maxsat": "ck"}}, methods=["GNN"])))
    cfg = ExperimentConfig.load(path)
    assert cfg.suites[0].path == str(tmp_path / "suite")
    assert cfg.checkpoint_for("GNN", "maxsat") == str(tmp_path / "ck")
    with pytest.raises(ConfigError, match="family gisp"):
        cfg.checkpoint_for("GNN", "gisp")
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        ExperimentConfig.load(path)


def test_missing_checkpoint_fails_before_solving(tmp_path):
    gen_suite(GenConfig.desk("gisp", 2, seed=1), tmp_path / "s")
    cfg = ExperimentConfig([SuiteRef(str(tmp_path / "s"))], ["GNN"], {"GNN": str(tmp_path / "nope")},
                           output=str(tmp_path / "r.csv"))
    with pytest.raises(Exception, match="no checkpoint"):
        run_experiment(cfg)
    assert not (tmp_path / "r.csv").exists()


def test_aggregate_counts_only_solved_runs():
    res = [InstanceResult("GNN", "f", "test", "a", "optimal", 3, 0.1, 1.0),
           InstanceResult("GNN", "f", "test", "b", "optimal", 8, 0.2, 1.0),
           InstanceResult("GNN", "f", "test", "c", "node_limit", 99, 0.5, math.nan),
           InstanceResult("GNN", "f", "transfer", "d", "error", 0, math.nan, math.nan)]
    rows = aggregate(res, timing=False)
    assert [(r.split, r.n_instances, r.n_solved) for r in rows] == [("test", 3, 2), ("transfer", 1, 0)]
    assert rows[0].geo_nodes == 5.0 and math.isnan(rows[0].geo_time)
    assert math.isnan(rows[1].geo_nodes)


def test_single_instance_node_count_and_csv(tmp_path):
    suite = tmp_path / "suite"
    suite.mkdir()
    inst = knapsack([10, 13, 7, 8, 9], [4, 6, 3, 5, 4], 11, "k5")
    write_instance(inst, suite / "k5.milp")
    (suite / "manifest.json").write_text(json.dumps({"config": {"family": "knap"}, "instances": [{"file": "k5.milp"}]}))
    expected = solve(inst, estimate_comp, HybridSelector(), warm_start=True).nodes_processed

    outputs = []
    for run in ("a", "b"):
        cfg = ExperimentConfig([SuiteRef(str(suite))], ["PLAIN_ESTIMATE", "ORACLE"],
                               output=str(tmp_path / run / "r.csv"), timing=False)
        out = run_experiment(cfg)
        assert out.failures == 0
        outputs.append(out.csv_path.read_bytes())
    assert outputs[0] == outputs[1]
    rows = read_rows(tmp_path / "a" / "r.csv")
    assert [r.method for r in rows] == ["PLAIN_ESTIMATE", "ORACLE"]
    assert rows[0].geo_nodes == expected and rows[0].geo_std_nodes == 1.0
    assert rows[1].n_solved == 1 and math.isnan(rows[1].geo_time)
    assert outputs[0].decode().splitlines()[0] == ",".join(CSV_COLUMNS)
    assert rows_csv(rows).encode() == outputs[0]
    assert (tmp_path / "a" / "r.md").read_text().startswith("Solver runs used 1")
    assert (tmp_path / "a" / "r_instances.csv").exists()
