import itertools
import json
import math

import numpy as np
import pytest

from nodesel.generators import (
    DESK_SIZES,
    FAMILIES,
    GENERATORS,
    GenConfig,
    fcmcnf_nnz,
    gen_er_graph,
    gen_fcmcnf,
    gen_gisp,
    gen_maxsat,
    gen_suite,
    load_suite,
    suite_plan,
)
from nodesel.milp import Sense, VarType, brute_force_solve, dumps_instance


def test_er_graph_edge_density():
    g = gen_er_graph(200, 0.6, 0)
    pairs = 200 * 199 / 2
    assert abs(len(g.edges) / pairs - 0.6) < 0.01
    assert all(u < v for u, v in g.edges)
    assert gen_er_graph(200, 0.6, 0) == g


@pytest.mark.parametrize("family", FAMILIES)
def test_generators_are_seeded(family):
    gen = GENERATORS[family]
    n = DESK_SIZES[family]["train_test"][0]
    assert dumps_instance(gen(n, 11)) == dumps_instance(gen(n, 11))
    assert dumps_instance(gen(n, 11)) != dumps_instance(gen(n, 12))


def test_maxsat_structure():
    inst = gen_maxsat(9, 4)
    g = gen_er_graph(9, 0.6, 4)
    E = len(g.edges)
    assert inst.num_vars == 9 + 2 * E and inst.num_cons == 2 * E
    assert all(t is VarType.BINARY for t in inst.vtypes)
    # both clauses of an edge hold iff its ends differ: optimum is -(E + max cut)
    cut = max(sum(bits[u] != bits[v] for u, v in g.edges) for bits in itertools.product((0, 1), repeat=9))
    assert brute_force_solve(inst).objective == pytest.approx(-(E + cut))


def test_gisp_structure():
    inst = gen_gisp(8, 5)
    g = gen_er_graph(8, 0.6, 5)
    assert inst.num_cons == len(g.edges)
    n_rem = inst.num_vars - 8
    assert sum(len(r) == 3 for r in inst.rows) == n_rem
    assert all(s is Sense.LE for s in inst.senses)
    assert np.all(inst.objective[:8] == -100) and np.all(inst.objective[8:] == 1)
    sol = brute_force_solve(inst)
    assert sol.objective <= -100    # any single vertex is independent


@pytest.mark.parametrize("n", [4, 5, 6])
def test_fcmcnf_structure(n):
    for seed in range(5):
        inst = gen_fcmcnf(n, seed)
        arcs = sum(t is VarType.BINARY for t in inst.vtypes)
        m = math.ceil(1.5 * n)
        assert inst.num_vars == arcs * (1 + m)
        assert inst.nnz == fcmcnf_nnz(inst)
        cap_rows = [r for r, s in zip(inst.rows, inst.senses) if s is Sense.LE]
        assert len(cap_rows) == arcs
        assert np.all(np.isinf(inst.upper[arcs:]))
        assert brute_force_solve(inst) is not None    # the feasibility retry holds


def test_suite_plan_sizes_and_determinism():
    cfg = GenConfig.desk("maxsat", 40, seed=3)
    plan = suite_plan(cfg)
    assert plan == suite_plan(cfg)
    assert all(8 <= n <= 12 for n, _ in plan)
    other = suite_plan(GenConfig.desk("maxsat", 40, seed=3, size_class="transfer"))
    assert all(13 <= n <= 14 for n, _ in other)
    assert {s for _, s in plan}.isdisjoint({s for _, s in other})


def test_suite_files_and_manifest(tmp_path):
    cfg = GenConfig.desk("gisp", 4, seed=1)
    insts, manifest = gen_suite(cfg, tmp_path)
    back, m2 = load_suite(tmp_path)
    assert back == insts
    assert m2 == json.loads(json.dumps(manifest))
    assert m2["config"]["size_class"] == "train_test"


def test_config_errors():
    with pytest.raises(ValueError):
        GenConfig("tsp", 1, 2, 3)
    with pytest.raises(ValueError):
        GenConfig("gisp", 5, 2, 3)
