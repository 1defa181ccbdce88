"""MILP data model, feasibility checks, text I/O and an enumeration oracle.

All problems are stored as minimization over ``A x (>=|<=|=) b`` with
per-variable bounds and types.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

FILE_INF = 1e20
FEAS_TOL = 1e-6


class Sense(str, enum.Enum):
    GE = "G"
    LE = "L"
    EQ = "E"


class VarType(str, enum.Enum):
    BINARY = "B"
    INTEGER = "I"
    CONTINUOUS = "C"


class MilpFormatError(ValueError):
    """Malformed instance file; message carries the offending line number."""


class EnumerationLimitError(RuntimeError):
    pass


Row = tuple[tuple[int, float], ...]


@dataclass(frozen=True, eq=False)
class MilpInstance:
    """Minimization MILP in sparse row form."""

    objective: np.ndarray
    rows: tuple[Row, ...]
    senses: tuple[Sense, ...]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    vtypes: tuple[VarType, ...]
    name: str = "milp"

    def __post_init__(self):
        obj = np.array(self.objective, dtype=float)
        n = obj.shape[0]
        rows = tuple(tuple((int(j), float(v)) for j, v in row) for row in self.rows)
        senses = tuple(Sense(s) for s in self.senses)
        vtypes = tuple(VarType(t) for t in self.vtypes)
        rhs = np.array(self.rhs, dtype=float).reshape(-1)
        lower = np.array(self.lower, dtype=float).reshape(-1)
        upper = np.array(self.upper, dtype=float).reshape(-1)
        if not (len(senses) == len(rows) == rhs.shape[0]):
            raise ValueError("rows, senses and rhs differ in length")
        if not (lower.shape[0] == upper.shape[0] == len(vtypes) == n):
            raise ValueError("objective, bounds and vtypes differ in length")
        for i, row in enumerate(rows):
            seen = set()
            for j, v in row:
                if not 0 <= j < n:
                    raise ValueError(f"row {i}: index {j} out of range")
                if j in seen:
                    raise ValueError(f"row {i}: duplicate index {j}")
                if v == 0.0:
                    raise ValueError(f"row {i}: zero coefficient stored for {j}")
                seen.add(j)
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        for j, t in enumerate(vtypes):
            if t is VarType.BINARY and (lower[j] < 0.0 or upper[j] > 1.0):
                raise ValueError(f"binary variable {j} has bounds outside [0, 1]")
        for arr in (obj, rhs, lower, upper):
            arr.flags.writeable = False
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "senses", senses)
        object.__setattr__(self, "vtypes", vtypes)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def num_vars(self) -> int:
        return self.objective.shape[0]

    @property
    def num_cons(self) -> int:
        return len(self.rows)

    @property
    def nnz(self) -> int:
        return sum(len(r) for r in self.rows)

    @cached_property
    def dense_matrix(self) -> np.ndarray:
        A = np.zeros((self.num_cons, self.num_vars))
        for i, row in enumerate(self.rows):
            for j, v in row:
                A[i, j] = v
        A.flags.writeable = False
        return A

    @cached_property
    def integer_mask(self) -> np.ndarray:
        mask = np.array([t is not VarType.CONTINUOUS for t in self.vtypes], dtype=bool)
        mask.flags.writeable = False
        return mask

    def __eq__(self, other):
        if not isinstance(other, MilpInstance):
            return NotImplemented
        return (
            self.name == other.name
            and self.rows == other.rows
            and self.senses == other.senses
            and self.vtypes == other.vtypes
            and np.array_equal(self.objective, other.objective)
            and np.array_equal(self.rhs, other.rhs)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    __hash__ = None


@dataclass(frozen=True)
class Solution:
    values: np.ndarray
    objective: float = field(default=math.nan)


def make_solution(inst: MilpInstance, x: Sequence[float]) -> Solution:
    values = np.array(x, dtype=float)
    return Solution(values, eval_objective(inst, values))


def eval_objective(inst: MilpInstance, x: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (inst.num_vars,):
        raise ValueError(f"expected {inst.num_vars} values, got shape {x.shape}")
    return float(inst.objective @ x)


def row_activities(inst: MilpInstance, x: np.ndarray) -> np.ndarray:
    return inst.dense_matrix @ x


def check_feasible(inst: MilpInstance, x: Sequence[float], tol: float = FEAS_TOL) -> bool:
    """True iff ``x`` satisfies every row, bound and integrality within ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.asarray(x, dtype=float)
    if x.shape != (inst.num_vars,) or not np.all(np.isfinite(x)):
        return False
    if np.any(x < inst.lower - tol) or np.any(x > inst.upper + tol):
        return False
    xi = x[inst.integer_mask]
    if np.any(np.abs(xi - np.round(xi)) > tol):
        return False
    act = row_activities(inst, x)
    for a, s, b in zip(act, inst.senses, inst.rhs):
        if s is Sense.GE and a < b - tol:
            return False
        if s is Sense.LE and a > b + tol:
            return False
        if s is Sense.EQ and abs(a - b) > tol:
            return False
    return True


# -- text format -------------------------------------------------------------

def _fmt(v: float) -> str:
    if v == math.inf:
        v = FILE_INF
    elif v == -math.inf:
        v = -FILE_INF
    return format(float(v), ".17g")


def _parse_bound(tok: str) -> float:
    v = float(tok)
    if v >= FILE_INF:
        return math.inf
    if v <= -FILE_INF:
        return -math.inf
    return v


def dumps_instance(inst: MilpInstance) -> str:
    lines = [f"MILP {inst.name} {inst.num_vars} {inst.num_cons}"]
    lines.append(" ".join(["OBJ"] + [_fmt(v) for v in inst.objective]))
    for j in range(inst.num_vars):
        lines.append(
            f"VAR {j} {inst.vtypes[j].value} {_fmt(inst.lower[j])} {_fmt(inst.upper[j])}"
        )
    for row, s, b in zip(inst.rows, inst.senses, inst.rhs):
        terms = " ".join(f"{j}:{_fmt(v)}" for j, v in row)
        lines.append(f"ROW {s.value} {_fmt(b)} {len(row)}" + (f" {terms}" if terms else ""))
    return "\n".join(lines) + "\n"


def loads_instance(text: str) -> MilpInstance:
    lines = text.splitlines()

    def fail(lineno: int, msg: str):
        raise MilpFormatError(f"line {lineno}: {msg}")

    if not lines:
        fail(1, "empty file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "MILP":
        fail(1, "expected 'MILP <name> <num_vars> <num_cons>'")
    try:
        name, n, m = head[1], int(head[2]), int(head[3])
    except ValueError:
        fail(1, "bad counts in header")
    if len(lines) < 2 + n + m:
        fail(len(lines), f"expected {2 + n + m} lines, found {len(lines)}")

    obj_tok = lines[1].split()
    if not obj_tok or obj_tok[0] != "OBJ" or len(obj_tok) != n + 1:
        fail(2, f"expected 'OBJ' followed by {n} values")
    try:
        objective = [float(t) for t in obj_tok[1:]]
    except ValueError:
        fail(2, "non-numeric objective coefficient")

    lower, upper, vtypes = [0.0] * n, [0.0] * n, [VarType.CONTINUOUS] * n
    for j in range(n):
        lineno = 3 + j
        tok = lines[2 + j].split()
        if len(tok) != 5 or tok[0] != "VAR" or tok[1] != str(j):
            fail(lineno, f"expected 'VAR {j} <type> <lb> <ub>'")
        try:
            vtypes[j] = VarType(tok[2])
            lower[j], upper[j] = _parse_bound(tok[3]), _parse_bound(tok[4])
        except ValueError:
            fail(lineno, "bad variable type or bound")

    rows, senses, rhs = [], [], []
    for i in range(m):
        lineno = 3 + n + i
        tok = lines[2 + n + i].split()
        if len(tok) < 4 or tok[0] != "ROW":
            fail(lineno, "expected 'ROW <sense> <rhs> <nnz> <idx:coef>...'")
        try:
            sense, b, nnz = Sense(tok[1]), float(tok[2]), int(tok[3])
        except ValueError:
            fail(lineno, "bad sense, rhs or nnz")
        if len(tok) != 4 + nnz:
            fail(lineno, f"declared {nnz} terms, found {len(tok) - 4}")
        row, seen = [], set()
        for t in tok[4:]:
            try:
                js, vs = t.split(":")
                j, v = int(js), float(vs)
            except ValueError:
                fail(lineno, f"bad term {t!r}")
            if not 0 <= j < n:
                fail(lineno, f"index {j} out of range")
            if j in seen:
                fail(lineno, f"duplicate index {j}")
            if v == 0.0:
                fail(lineno, f"zero coefficient for index {j}")
            seen.add(j)
            row.append((j, v))
        rows.append(tuple(row))
        senses.append(sense)
        rhs.append(b)
    for extra, line in enumerate(lines[2 + n + m:], start=3 + n + m):
        if line.strip():
            fail(extra, "trailing content")
    try:
        return MilpInstance(objective, tuple(rows), tuple(senses), rhs, lower, upper, tuple(vtypes), name)
    except ValueError as exc:
        raise MilpFormatError(f"line 1: {exc}") from exc


def write_instance(inst: MilpInstance, path) -> None:
    Path(path).write_text(dumps_instance(inst), encoding="utf-8")


def read_instance(path) -> MilpInstance:
    return loads_instance(Path(path).read_text(encoding="utf-8"))


# -- enumeration oracle ------------------------------------------------------

class _ResidualLp:
    """Residual LPs of one instance under changing boxes, solved by HiGHS.

    Kept separate from the in-house simplex so the oracle stays independent.
    """

    def __init__(self, inst: MilpInstance):
        import highspy

        self.inst = inst
        self.highspy = highspy
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        inf = highspy.kHighsInf
        lp = highspy.HighsLp()
        n, m = inst.num_vars, inst.num_cons
        lp.num_col_, lp.num_row_ = n, m
        lp.col_cost_ = np.asarray(inst.objective, dtype=float)
        lp.col_lower_ = np.where(np.isfinite(inst.lower), inst.lower, -inf)
        lp.col_upper_ = np.where(np.isfinite(inst.upper), inst.upper, inf)
        row_lo = np.array([b if s is not Sense.LE else -inf for s, b in zip(inst.senses, inst.rhs)])
        row_up = np.array([b if s is not Sense.GE else inf for s, b in zip(inst.senses, inst.rhs)])
        lp.row_lower_, lp.row_upper_ = row_lo, row_up
        starts, index, value = [0], [], []
        for i, row in enumerate(inst.rows):
            for j, v in row:
                index.append(j)
                value.append(v)
            starts.append(len(index))
        lp.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
        lp.a_matrix_.start_ = np.array(starts, dtype=np.int32)
        lp.a_matrix_.index_ = np.array(index, dtype=np.int32)
        lp.a_matrix_.value_ = np.array(value, dtype=float)
        lp.a_matrix_.num_col_, lp.a_matrix_.num_row_ = n, m
        h.passModel(lp)
        self.h = h
        self.inf = inf
        self.cols = np.arange(n, dtype=np.int32)

    def solve(self, lower: np.ndarray, upper: np.ndarray) -> Optional[np.ndarray]:
        h, inf = self.h, self.inf
        h.changeColsBounds(len(self.cols), self.cols,
                           np.where(np.isfinite(lower), lower, -inf),
                           np.where(np.isfinite(upper), upper, inf))
        h.run()
        st = h.getModelStatus()
        ms = self.highspy.HighsModelStatus
        if st == ms.kInfeasible:
            return None
        if st in (ms.kUnbounded, ms.kUnboundedOrInfeasible):
            # disambiguate with a zero objective feasibility solve
            if st == ms.kUnboundedOrInfeasible and self._infeasible(lower, upper):
                return None
            raise ValueError(f"{self.inst.name}: residual LP is unbounded")
        if st != ms.kOptimal:
            raise RuntimeError(f"{self.inst.name}: residual LP failed ({h.modelStatusToString(st)})")
        return np.array(h.getSolution().col_value, dtype=float)

    def _infeasible(self, lower, upper) -> bool:
        from scipy.optimize import linprog

        A = self.inst.dense_matrix
        rows = [(A[i], s, b) for i, (s, b) in enumerate(zip(self.inst.senses, self.inst.rhs))]
        A_ub = [r if s is Sense.LE else -r for r, s, b in rows if s is not Sense.EQ]
        b_ub = [b if s is Sense.LE else -b for r, s, b in rows if s is not Sense.EQ]
        A_eq = [r for r, s, b in rows if s is Sense.EQ]
        b_eq = [b for r, s, b in rows if s is Sense.EQ]
        res = linprog(np.zeros(self.inst.num_vars), A_ub=A_ub or None, b_ub=b_ub or None,
                      A_eq=A_eq or None, b_eq=b_eq or None, bounds=list(zip(lower, upper)))
        return res.status == 2


def brute_force_solve(
    inst: MilpInstance,
    max_assignments: int = 10**6,
    tol: float = FEAS_TOL,
) -> Optional[Solution]:
    """Globally optimal solution by enumerating integer assignments.

    Integer variables are fixed one at a time in index order over their full
    domains. A partial assignment whose residual LP (free integers relaxed) is
    infeasible holds no solution; one whose residual LP optimum is already
    integral needs no further enumeration; one whose residual LP optimum is
    worse than the best complete assignment so far (by more than a relative
    1e-9) cannot hold a better one.
    """
    int_idx = [j for j in range(inst.num_vars) if inst.integer_mask[j]]
    for j in int_idx:
        if not (math.isfinite(inst.lower[j]) and math.isfinite(inst.upper[j])):
            raise ValueError(f"integer variable {j} has an infinite bound")
    domains = [
        range(math.ceil(inst.lower[j] - tol), math.floor(inst.upper[j] + tol) + 1)
        for j in int_idx
    ]
    best: Optional[np.ndarray] = None
    best_obj = math.inf
    visited = 0

    def integral(x):
        xi = x[int_idx]
        return np.all(np.abs(xi - np.round(xi)) <= tol)

    lp = _ResidualLp(inst)
    # explicit stack: (depth, lower, upper)
    stack = [(0, inst.lower.copy(), inst.upper.copy())]
    while stack:
        depth, lo, up = stack.pop()
        visited += 1
        if visited > max_assignments:
            raise EnumerationLimitError(f"more than {max_assignments} assignments enumerated")
        x = lp.solve(lo, up)
        if x is None:
            continue
        if float(inst.objective @ x) > best_obj + 1e-9 * (1.0 + abs(best_obj)):
            continue
        if depth == len(int_idx) or integral(x):
            x = x.copy()
            x[int_idx] = np.round(x[int_idx])
            obj = float(inst.objective @ x)
            if obj < best_obj - 1e-12:
                best, best_obj = x, obj
            continue
        j = int_idx[depth]
        for v in reversed(domains[depth]):
            lo2, up2 = lo.copy(), up.copy()
            lo2[j] = up2[j] = v
            stack.append((depth + 1, lo2, up2))
    if best is None:
        return None
    return make_solution(inst, best)


def enumerate_integer_points(lower: Iterable[float], upper: Iterable[float]):
    """All integer vectors in a finite box (test helper for small boxes)."""
    ranges = [range(math.ceil(a), math.floor(b) + 1) for a, b in zip(lower, upper)]
    return itertools.product(*ranges)
