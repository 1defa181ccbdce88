"""Bounded-variable revised primal simplex for LP relaxations.

Each row ``i`` gets a logical variable ``s_i = a_i x`` whose bounds encode the
row sense, so the working system is ``[A  -I] (x, s) = 0`` with every column
boxed. The logical basis is always a valid start. Phase 1 minimizes the sum of
bound violations of basic variables; phase 2 minimizes ``c x``. The phase is
re-chosen every iteration, so drift back into infeasibility is repaired.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
from numba import njit

from .milp import MilpInstance, Sense

log = logging.getLogger(__name__)

PRIMAL_TOL = 1e-7
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 50
BLAND_AFTER = 50

AT_LOWER, AT_UPPER, AT_ZERO, BASIC = 0, 1, 2, 3


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class LpNumericalError(RuntimeError):
    """Simplex broke down numerically; not the same as infeasibility."""


class LocalBounds(Mapping[int, tuple[float, float]]):
    """Immutable map ``var -> (lb, ub)`` of bound overrides for a subproblem."""

    __slots__ = ("_over",)

    def __init__(self, overrides: Optional[Mapping[int, tuple[float, float]]] = None):
        over = {}
        for j, (lb, ub) in (overrides or {}).items():
            lb, ub = float(lb), float(ub)
            if lb > ub:
                raise ValueError(f"override for {j}: lb {lb} > ub {ub}")
            over[int(j)] = (lb, ub)
        self._over = over

    def __getitem__(self, j):
        return self._over[j]

    def __iter__(self):
        return iter(sorted(self._over))

    def __len__(self):
        return len(self._over)

    def __repr__(self):
        return f"LocalBounds({dict(sorted(self._over.items()))})"

    def tighten(self, j: int, lb: float = -math.inf, ub: float = math.inf) -> "LocalBounds":
        """New bounds with ``var j`` intersected with ``[lb, ub]``."""
        old = self._over.get(j, (-math.inf, math.inf))
        new = dict(self._over)
        new[j] = (max(old[0], lb), min(old[1], ub))
        return LocalBounds(new)

    def apply(self, inst: MilpInstance) -> tuple[np.ndarray, np.ndarray]:
        lo, up = inst.lower.copy(), inst.upper.copy()
        for j, (a, b) in self._over.items():
            lo[j] = max(lo[j], a)
            up[j] = min(up[j], b)
        return lo, up

    def contains(self, inst: MilpInstance, x: np.ndarray, tol: float = 1e-6) -> bool:
        """Whether ``x`` respects the global bounds tightened by these overrides."""
        lo, up = self.apply(inst)
        return bool(np.all(x >= lo - tol) and np.all(x <= up + tol))


@dataclass(frozen=True)
class Basis:
    """Warm-start information: basic columns and nonbasic bound statuses."""

    head: np.ndarray
    status: np.ndarray


@dataclass(frozen=True)
class LpResult:
    status: LpStatus
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    iterations: int = 0
    basis: Optional[Basis] = None


def lp_lower_bound(result: LpResult) -> float:
    if result.status is not LpStatus.OPTIMAL:
        raise ValueError(f"no bound from a {result.status.value} LP")
    return float(result.objective)


def _row_bounds(inst: MilpInstance) -> tuple[np.ndarray, np.ndarray]:
    m = inst.num_cons
    lo = np.full(m, -math.inf)
    up = np.full(m, math.inf)
    for i, (s, b) in enumerate(zip(inst.senses, inst.rhs)):
        if s is not Sense.LE:
            lo[i] = b
        if s is not Sense.GE:
            up[i] = b
    return lo, up


@njit(cache=True)
def _refactor(A, x, status, head, Binv):
    m, n = A.shape
    B = np.zeros((m, m))
    for k in range(m):
        j = head[k]
        if j < n:
            B[:, k] = A[:, j]
        else:
            B[j - n, k] = -1.0
    Binv[:, :] = np.linalg.inv(B)
    # B x_B + N x_N = 0
    rhs = np.zeros(m)
    for j in range(n):
        if status[j] != BASIC and x[j] != 0.0:
            rhs += A[:, j] * x[j]
    for i in range(m):
        if status[n + i] != BASIC:
            rhs[i] -= x[n + i]
    xb = -(Binv @ rhs)
    for k in range(m):
        x[head[k]] = xb[k]


@njit(cache=True)
def _column(A, j, out):
    m, n = A.shape
    if j < n:
        out[:] = A[:, j]
    else:
        out[:] = 0.0
        out[j - n] = -1.0


@njit(cache=True)
def _pivot_loop(A, lo, up, cost, x, status, head, Binv, max_iter, refactor_every, bland_after,
                primal_tol, dual_tol, pivot_tol):
    """Run simplex iterations in place. Returns (code, iterations).

    Codes: 0 optimal, 1 infeasible, 2 unbounded, 3 iteration limit,
    4 pivot too small, 5 unbounded ray in phase 1.
    """
    m, n = A.shape
    N = n + m
    iters = 0
    since_refactor = 0
    degenerate = 0
    xb = np.empty(m)
    cb = np.empty(m)
    below = np.zeros(m, dtype=np.bool_)
    above = np.zeros(m, dtype=np.bool_)
    d = np.empty(N)
    col = np.empty(m)
    alpha = np.empty(m)
    while True:
        if iters >= max_iter:
            return 3, iters
        phase1 = False
        infeas = 0.0
        for k in range(m):
            j = head[k]
            v = x[j]
            xb[k] = v
            below[k] = v < lo[j] - primal_tol
            above[k] = v > up[j] + primal_tol
            if below[k]:
                phase1 = True
                infeas += lo[j] - v
            elif above[k]:
                phase1 = True
                infeas += v - up[j]
        for k in range(m):
            if phase1:
                cb[k] = 1.0 if above[k] else (-1.0 if below[k] else 0.0)
            else:
                cb[k] = cost[head[k]]
        y = cb @ Binv
        for j in range(n):
            acc = 0.0 if phase1 else cost[j]
            for i in range(m):
                acc -= A[i, j] * y[i]
            d[j] = acc
        for i in range(m):
            d[n + i] = (0.0 if phase1 else cost[n + i]) + y[i]

        bland = degenerate >= bland_after
        q = -1
        best = 0.0
        direction = 0.0
        for j in range(N):
            st = status[j]
            if st == BASIC or not (up[j] > lo[j]):
                continue
            dj = d[j]
            ok_up = (st == AT_LOWER or st == AT_ZERO) and dj < -dual_tol
            ok_dn = (st == AT_UPPER or st == AT_ZERO) and dj > dual_tol
            if ok_up or ok_dn:
                if bland:
                    q = j
                    direction = 1.0 if ok_up else -1.0
                    break
                if abs(dj) > best:
                    best = abs(dj)
                    q = j
                    direction = 1.0 if ok_up else -1.0
        if q < 0:
            if phase1 and infeas > primal_tol:
                return 1, iters
            return 0, iters

        _column(A, q, col)
        for k in range(m):
            acc = 0.0
            for i in range(m):
                acc += Binv[k, i] * col[i]
            alpha[k] = acc
        t_best = up[q] - lo[q]
        r = -1
        leave_at = 0.0
        t_rows = np.inf
        for k in range(m):
            delta = -direction * alpha[k]
            j = head[k]
            ratio = np.inf
            if delta < -pivot_tol:
                if above[k]:
                    ratio = (xb[k] - up[j]) / -delta
                elif not below[k] and lo[j] > -np.inf:
                    ratio = (xb[k] - lo[j]) / -delta
            elif delta > pivot_tol:
                if below[k]:
                    ratio = (lo[j] - xb[k]) / delta
                elif not above[k] and up[j] < np.inf:
                    ratio = (up[j] - xb[k]) / delta
            if ratio < 0.0:
                ratio = 0.0
            if ratio < t_rows:
                t_rows = ratio
        if t_rows < t_best:
            # among near-ties prefer the largest pivot, or the lowest index under Bland
            best_piv = -1.0
            for k in range(m):
                delta = -direction * alpha[k]
                j = head[k]
                ratio = np.inf
                hit = 0.0
                if delta < -pivot_tol:
                    if above[k]:
                        ratio = (xb[k] - up[j]) / -delta
                        hit = up[j]
                    elif not below[k] and lo[j] > -np.inf:
                        ratio = (xb[k] - lo[j]) / -delta
                        hit = lo[j]
                elif delta > pivot_tol:
                    if below[k]:
                        ratio = (lo[j] - xb[k]) / delta
                        hit = lo[j]
                    elif not above[k] and up[j] < np.inf:
                        ratio = (up[j] - xb[k]) / delta
                        hit = up[j]
                if ratio < 0.0:
                    ratio = 0.0
                if ratio <= t_rows + 1e-12:
                    if bland:
                        if r < 0 or head[k] < head[r]:
                            r = k
                            leave_at = hit
                    elif abs(alpha[k]) > best_piv:
                        best_piv = abs(alpha[k])
                        r = k
                        leave_at = hit
            t_best = t_rows
        if not t_best < np.inf:
            return (5 if phase1 else 2), iters

        iters += 1
        if t_best <= 1e-12:
            degenerate += 1
        else:
            degenerate = 0
        x[q] += direction * t_best
        for k in range(m):
            x[head[k]] = xb[k] - direction * t_best * alpha[k]
        if r < 0:
            if direction > 0:
                status[q] = AT_UPPER
                x[q] = up[q]
            else:
                status[q] = AT_LOWER
                x[q] = lo[q]
            continue
        piv = alpha[r]
        if abs(piv) < pivot_tol:
            return 4, iters
        leaving = head[r]
        x[leaving] = leave_at
        status[leaving] = AT_LOWER if leave_at == lo[leaving] else AT_UPPER
        status[q] = BASIC
        head[r] = q
        for i in range(m):
            Binv[r, i] /= piv
        for k in range(m):
            if k != r:
                a = alpha[k]
                if a != 0.0:
                    for i in range(m):
                        Binv[k, i] -= a * Binv[r, i]
        since_refactor += 1
        if since_refactor >= refactor_every:
            _refactor(A, x, status, head, Binv)
            since_refactor = 0


_FAILURES = {
    3: "iteration limit reached",
    4: "pivot element too small",
    5: "unbounded direction during phase 1",
}


def _initial_state(n, m, lo, up, basis: Optional[Basis]):
    N = n + m
    if basis is not None and len(basis.head) == m and len(basis.status) == N:
        head = np.array(basis.head, dtype=np.int64)
        status = np.array(basis.status, dtype=np.int8)
    else:
        head = np.arange(n, N, dtype=np.int64)
        status = np.full(N, AT_ZERO, dtype=np.int8)
        status[n:] = BASIC
    nb = status != BASIC
    fin_lo, fin_up = np.isfinite(lo), np.isfinite(up)
    want_up = (status == AT_UPPER) & fin_up
    status[nb] = np.where(want_up[nb], AT_UPPER,
                          np.where(fin_lo[nb], AT_LOWER, np.where(fin_up[nb], AT_UPPER, AT_ZERO)))
    x = np.zeros(N)
    x[nb & (status == AT_LOWER)] = lo[nb & (status == AT_LOWER)]
    x[nb & (status == AT_UPPER)] = up[nb & (status == AT_UPPER)]
    return x, status, head


def solve_lp(
    inst: MilpInstance,
    bounds: Optional[LocalBounds] = None,
    *,
    warm_start: Optional[Basis] = None,
    max_iter: Optional[int] = None,
    verbose: bool = False,
) -> LpResult:
    """Solve the LP relaxation of ``inst`` under local bound overrides.

    Cold start from the logical basis unless ``warm_start`` carries a basis
    (typically the parent node's).
    """
    lower, upper = (bounds or LocalBounds()).apply(inst)
    if np.any(lower > upper + PRIMAL_TOL):
        return LpResult(LpStatus.INFEASIBLE)
    n, m = inst.num_vars, inst.num_cons
    if max_iter is None:
        max_iter = 50 * (n + m) + 1000
    rlo, rup = _row_bounds(inst)
    lo = np.concatenate([lower, rlo])
    up = np.concatenate([upper, rup])
    cost = np.concatenate([inst.objective, np.zeros(m)])
    x, status, head = _initial_state(n, m, lo, up, warm_start)
    A = np.ascontiguousarray(inst.dense_matrix)
    Binv = np.empty((m, m))
    try:
        _refactor(A, x, status, head, Binv)
    except np.linalg.LinAlgError as exc:
        raise LpNumericalError("singular starting basis") from exc
    try:
        code, iters = _pivot_loop(A, lo, up, cost, x, status, head, Binv, max_iter,
                                  REFACTOR_EVERY, BLAND_AFTER, PRIMAL_TOL, DUAL_TOL, PIVOT_TOL)
    except np.linalg.LinAlgError as exc:
        raise LpNumericalError(f"{inst.name}: singular basis on refactorization") from exc
    if verbose:
        log.info("%s: simplex code %d after %d iterations", inst.name, code, iters)
    if code in _FAILURES:
        raise LpNumericalError(f"{inst.name}: {_FAILURES[code]}")
    if code == 1:
        return LpResult(LpStatus.INFEASIBLE, iterations=iters)
    if code == 2:
        return LpResult(LpStatus.UNBOUNDED, iterations=iters)
    if not np.all(np.isfinite(x)):
        raise LpNumericalError(f"{inst.name}: non-finite primal values")
    xs = np.minimum(np.maximum(x[:n], lower), upper)
    return LpResult(LpStatus.OPTIMAL, xs, float(inst.objective @ xs), iters, Basis(head, status))
