import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nodesel.milp import MilpInstance
from nodesel.simplex import LocalBounds, LpStatus, lp_lower_bound, solve_lp
from oracles import random_bounded_lp, vertex_lp_optimum


def agrees(res, ref, tol=1e-7):
    if ref is None:
        return res.status is LpStatus.INFEASIBLE
    return res.status is LpStatus.OPTIMAL and abs(res.objective - ref) <= tol * (1 + abs(ref))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matches_vertex_enumeration(seed):
    inst = random_bounded_lp(np.random.default_rng(seed), n_max=5, m_max=6)
    res = solve_lp(inst)
    assert agrees(res, vertex_lp_optimum(inst))
    if res.status is LpStatus.OPTIMAL:
        assert res.objective == pytest.approx(inst.objective @ res.x, abs=1e-9)


def test_textbook_lp():
    # max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 (optimum 36 at (2, 6))
    inst = MilpInstance([-3, -5], (((0, 1.0),), ((1, 2.0),), ((0, 3.0), (1, 2.0))), "LLL", [4, 12, 18],
                        [0, 0], [math.inf, math.inf], "CC")
    res = solve_lp(inst)
    assert res.status is LpStatus.OPTIMAL
    np.testing.assert_allclose(res.x, [2, 6], atol=1e-9)
    assert lp_lower_bound(res) == pytest.approx(-36)


def test_free_variables_and_equalities():
    # min x + y, x - y = 1, x + y >= 3, both free: optimum 3 at (2, 1)
    inst = MilpInstance([1, 1], (((0, 1.0), (1, -1.0)), ((0, 1.0), (1, 1.0))), "EG", [1, 3],
                        [-math.inf, -math.inf], [math.inf, math.inf], "CC")
    res = solve_lp(inst)
    assert res.status is LpStatus.OPTIMAL
    np.testing.assert_allclose(res.x, [2, 1], atol=1e-9)


def test_infeasible_and_unbounded():
    infeasible = MilpInstance([1, 1], (((0, 1.0), (1, 1.0)),), "G", [5], [0, 0], [2, 2], "CC")
    assert solve_lp(infeasible).status is LpStatus.INFEASIBLE
    unbounded = MilpInstance([-1, 0], (((0, 1.0), (1, -1.0)),), "L", [1], [0, 0], [math.inf, math.inf], "CC")
    assert solve_lp(unbounded).status is LpStatus.UNBOUNDED
    with pytest.raises(ValueError):
        lp_lower_bound(solve_lp(infeasible))


def test_crossed_local_bounds_are_infeasible():
    inst = MilpInstance([1], (), (), [], [0], [5], "C")
    assert solve_lp(inst, LocalBounds({0: (6, 7)})).status is LpStatus.INFEASIBLE
    with pytest.raises(ValueError):
        LocalBounds({0: (3, 5)}).tighten(0, ub=2)


def test_local_bounds_tighten_and_apply():
    inst = MilpInstance([1, 1], (), (), [], [0, -1], [4, 1], "CC")
    b = LocalBounds().tighten(0, lb=1).tighten(0, ub=3).tighten(1, ub=5)
    lo, up = b.apply(inst)
    np.testing.assert_array_equal(lo, [1, -1])
    np.testing.assert_array_equal(up, [3, 1])
    assert list(b) == [0, 1] and len(b) == 2
    with pytest.raises(ValueError):
        LocalBounds({0: (2, 1)})


def test_warm_start_gives_same_optimum():
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 40:
        inst = random_bounded_lp(rng, n_max=8, m_max=10)
        parent = solve_lp(inst)
        if parent.status is not LpStatus.OPTIMAL:
            continue
        j = int(rng.integers(inst.num_vars))
        mid = 0.5 * (inst.lower[j] + inst.upper[j])
        for b in (LocalBounds().tighten(j, ub=mid), LocalBounds().tighten(j, lb=mid)):
            cold = solve_lp(inst, b)
            warm = solve_lp(inst, b, warm_start=parent.basis)
            assert warm.status is cold.status
            if cold.status is LpStatus.OPTIMAL:
                assert warm.objective == pytest.approx(cold.objective, abs=1e-7 * (1 + abs(cold.objective)))
        checked += 1
