import itertools
import math

import numpy as np
import pytest

from conftest import knapsack
from nodesel.generators import gen_fcmcnf, gen_gisp, gen_maxsat
from nodesel.milp import (
    EnumerationLimitError,
    MilpFormatError,
    MilpInstance,
    Sense,
    VarType,
    brute_force_solve,
    check_feasible,
    dumps_instance,
    enumerate_integer_points,
    eval_objective,
    loads_instance,
    read_instance,
    write_instance,
)


def pure_integer_optimum(inst):
    """Exhaustive search over every integer point (all variables integer)."""
    best = math.inf
    for x in enumerate_integer_points(inst.lower, inst.upper):
        if check_feasible(inst, x):
            best = min(best, eval_objective(inst, x))
    return best


def test_instance_validation():
    with pytest.raises(ValueError, match="duplicate"):
        MilpInstance([1, 1], (((0, 1.0), (0, 2.0)),), "L", [1], [0, 0], [1, 1], "BB")
    with pytest.raises(ValueError, match="zero coefficient"):
        MilpInstance([1], (((0, 0.0),),), "L", [1], [0], [1], "B")
    with pytest.raises(ValueError, match="out of range"):
        MilpInstance([1], (((3, 1.0),),), "L", [1], [0], [1], "B")
    with pytest.raises(ValueError, match="lower bound"):
        MilpInstance([1], (), (), [], [2], [1], "C")
    with pytest.raises(ValueError, match="binary"):
        MilpInstance([1], (), (), [], [0], [2], "B")


def test_instance_is_immutable(small_knapsack):
    with pytest.raises(ValueError):
        small_knapsack.objective[0] = 5.0


def test_check_feasible(small_knapsack):
    assert check_feasible(small_knapsack, [1, 1, 0, 0, 0])
    assert not check_feasible(small_knapsack, [1, 1, 1, 0, 0])     # weight 16 > 12
    assert not check_feasible(small_knapsack, [0.5, 0, 0, 0, 0])   # fractional binary
    assert not check_feasible(small_knapsack, [1, 0, 0, 0])         # wrong length
    with pytest.raises(ValueError):
        check_feasible(small_knapsack, [0] * 5, tol=0)


def test_text_round_trip(tmp_path):
    inst = MilpInstance([1.5, -2, 1 / 3], (((0, 1.0), (2, 0.1)), ((1, -3.0),)), ("E", "G"), [2, -1],
                        [-math.inf, 0, 0], [4, math.inf, 7], ("C", "I", "I"), name="mixed")
    back = loads_instance(dumps_instance(inst))
    assert back == inst
    write_instance(inst, tmp_path / "a.milp")
    assert read_instance(tmp_path / "a.milp") == inst
    for gen, n in ((gen_fcmcnf, 5), (gen_maxsat, 9), (gen_gisp, 7)):
        g = gen(n, 3)
        assert loads_instance(dumps_instance(g)) == g


@pytest.mark.parametrize("text, line", [
    ("", 1),
    ("MILP x 1 0\nOBJ 1\n", 2),
    ("MILP x 1 0\nOBJ 1\nVAR 0 Q 0 1\n", 3),
    ("MILP x 1 1\nOBJ 1\nVAR 0 B 0 1\nROW L 1 2 0:1\n", 4),
    ("MILP x 1 1\nOBJ 1\nVAR 0 B 0 1\nROW L 1 1 0:0\n", 4),
    ("MILP x 1 0\nOBJ 1\nVAR 0 B 0 1\nextra\n", 4),
])
def test_format_errors_name_the_line(text, line):
    with pytest.raises(MilpFormatError, match=f"line {line}:"):
        loads_instance(text)


def test_brute_force_matches_exhaustive_search():
    rng = np.random.default_rng(1)
    for t in range(30):
        n = int(rng.integers(2, 7))
        inst = knapsack(rng.integers(1, 20, n), rng.integers(1, 10, n), float(rng.integers(5, 20)), f"k{t}")
        sol = brute_force_solve(inst)
        assert sol is not None
        assert sol.objective == pytest.approx(pure_integer_optimum(inst), abs=1e-9)
        assert check_feasible(inst, sol.values)


def test_brute_force_general_integers():
    # min -x - 2y  s.t. 3x + 4y <= 11, x - y >= -1, 0 <= x, y <= 3
    inst = MilpInstance([-1, -2], (((0, 3.0), (1, 4.0)), ((0, 1.0), (1, -1.0))), ("L", "G"), [11, -1],
                        [0, 0], [3, 3], ("I", "I"))
    assert brute_force_solve(inst).objective == pure_integer_optimum(inst) == -5


def test_brute_force_mixed_and_infeasible():
    # continuous part: x_c >= 1.5 - y, minimize y + x_c with y integer in [0, 2]
    inst = MilpInstance([1, 1], (((0, 1.0), (1, 1.0)),), ("G",), [1.5], [0, 0], [2, 10], ("I", "C"))
    assert brute_force_solve(inst).objective == pytest.approx(1.5)
    empty = MilpInstance([1], (((0, 2.0),),), ("E",), [1], [0], [3], ("I",))
    assert brute_force_solve(empty) is None


def test_brute_force_errors():
    inst = MilpInstance([1], (), (), [], [0], [math.inf], ("I",))
    with pytest.raises(ValueError, match="infinite"):
        brute_force_solve(inst)
    unbounded = MilpInstance([1, -1], (), (), [], [0, 0], [1, math.inf], ("I", "C"))
    with pytest.raises(ValueError, match="unbounded"):
        brute_force_solve(unbounded)
    n = 12
    flat = MilpInstance(-np.ones(n), (tuple((j, 2.0) for j in range(n)),), ("L",), [101],
                        np.zeros(n), np.full(n, 9.0), ("I",) * n)
    with pytest.raises(EnumerationLimitError):
        brute_force_solve(flat, max_assignments=50)


def test_enumerate_integer_points():
    pts = list(enumerate_integer_points([0, -1.5], [1, 0.2]))
    assert pts == list(itertools.product([0, 1], [-1, 0]))


def test_sense_and_vartype_parse_from_file_tokens():
    assert Sense("L") is Sense.LE and VarType("C") is VarType.CONTINUOUS
