import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nodesel.milp import MilpInstance, Sense, VarType  # noqa: E402


def knapsack(values, weights, cap, name="knap") -> MilpInstance:
    """max v.x s.t. w.x <= cap, x binary (stated as a minimization)."""
    n = len(values)
    return MilpInstance(-np.asarray(values, float), (tuple(enumerate(map(float, weights))),), (Sense.LE,),
                        [cap], np.zeros(n), np.ones(n), (VarType.BINARY,) * n, name=name)


@pytest.fixture
def small_knapsack():
    return knapsack([10, 13, 7, 8, 4], [5, 7, 4, 5, 3], 12)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
