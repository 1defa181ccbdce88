"""Branch and bound with a priority list ordered by a pluggable node comparator.

A comparator is any callable ``comp(a, b) -> CompDecision``. Objects may also
define ``bind(tree)``, which the engine calls once before solving so that the
comparator can see the instance and live tree statistics.

Children are evaluated eagerly: both LPs are solved right after branching,
so every node in the open list carries its own dual bound and estimate.
"""

from __future__ import annotations

import enum
import functools
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, TextIO

import numpy as np

from .milp import MilpInstance, Solution, make_solution
from .simplex import LocalBounds, LpNumericalError, LpResult, LpStatus, lp_lower_bound, solve_lp

log = logging.getLogger(__name__)

INT_TOL = 1e-6
PRUNE_TOL = 1e-9


class CompDecision(enum.Enum):
    FIRST_BETTER = 0
    SECOND_BETTER = 1
    EQUAL = 2

    def opposite(self) -> "CompDecision":
        if self is CompDecision.FIRST_BETTER:
            return CompDecision.SECOND_BETTER
        if self is CompDecision.SECOND_BETTER:
            return CompDecision.FIRST_BETTER
        return self


class Direction(enum.Enum):
    DOWN = -1
    UP = 1


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    NODE_LIMIT = "node_limit"
    TIME_LIMIT = "time_limit"
    INFEASIBLE = "infeasible"


class BnbError(RuntimeError):
    pass


@dataclass(eq=False)
class BnbNode:
    id: int
    parent_id: Optional[int]
    depth: int
    bounds: LocalBounds
    lp: Optional[LpResult] = None
    dual_bound: float = -math.inf
    estimate: float = -math.inf
    branch_var: Optional[int] = None
    branch_dir: Optional[Direction] = None
    # LP fraction of branch_var at the parent, and share of fractional
    # integer variables in the parent LP (used by fixed features)
    branch_frac: float = 0.0
    parent_frac_ratio: float = 0.0

    @property
    def solved(self) -> bool:
        return self.lp is not None and self.lp.status is LpStatus.OPTIMAL

    def contains(self, x: np.ndarray, tol: float = INT_TOL) -> bool:
        """Whether ``x`` satisfies this node's branching bounds."""
        for j, (lb, ub) in self.bounds.items():
            if x[j] < lb - tol or x[j] > ub + tol:
                return False
        return True

    def __repr__(self):
        return f"BnbNode(id={self.id}, depth={self.depth}, bound={self.dual_bound:.6g}, est={self.estimate:.6g})"


class PseudocostTable:
    """Per-variable average objective gain per unit of fractionality."""

    def __init__(self, num_vars: int):
        self.sums = np.zeros((2, num_vars))
        self.counts = np.zeros((2, num_vars), dtype=np.int64)

    @staticmethod
    def _row(direction: Direction) -> int:
        return 0 if direction is Direction.DOWN else 1

    def average(self, j: int, direction: Direction) -> float:
        r = self._row(direction)
        if self.counts[r, j] > 0:
            return self.sums[r, j] / self.counts[r, j]
        seen = self.counts[r] > 0
        if seen.any():
            return float(np.mean(self.sums[r, seen] / self.counts[r, seen]))
        return 1.0

    def averages(self, direction: Direction) -> np.ndarray:
        r = self._row(direction)
        seen = self.counts[r] > 0
        out = np.ones(self.sums.shape[1])
        if seen.any():
            per = self.sums[r, seen] / self.counts[r, seen]
            out[:] = per.mean()
            out[seen] = per
        return out


def update_pseudocosts(
    pc: PseudocostTable,
    branch_var: int,
    direction: Direction,
    parent_bound: float,
    child_bound: float,
    fraction: float,
) -> None:
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction {fraction} outside (0, 1)")
    delta = fraction if direction is Direction.DOWN else 1.0 - fraction
    gain = max(child_bound - parent_bound, 0.0) / delta
    r = pc._row(direction)
    pc.sums[r, branch_var] += gain
    pc.counts[r, branch_var] += 1


def fractional_parts(x: np.ndarray, integer_mask: np.ndarray) -> np.ndarray:
    """``x - floor(x)`` on fractional integer variables, 0 elsewhere."""
    f = x - np.floor(x)
    frac = integer_mask & (np.abs(x - np.round(x)) > INT_TOL)
    return np.where(frac, f, 0.0)


def is_integral(x: np.ndarray, integer_mask: np.ndarray) -> bool:
    xi = x[integer_mask]
    return bool(np.all(np.abs(xi - np.round(xi)) <= INT_TOL))


def compute_estimate(node: BnbNode, x: np.ndarray, pc: PseudocostTable, integer_mask: np.ndarray) -> float:
    """Dual bound plus the cheaper pseudocost degradation of each fractionality."""
    frac_mask = integer_mask & (np.abs(x - np.round(x)) > INT_TOL)
    if not frac_mask.any():
        return node.dual_bound
    f = (x - np.floor(x))[frac_mask]
    down = np.maximum(pc.averages(Direction.DOWN)[frac_mask], 0.0)
    up = np.maximum(pc.averages(Direction.UP)[frac_mask], 0.0)
    return node.dual_bound + float(np.sum(np.minimum(down * f, up * (1.0 - f))))


def select_branch_var(x: np.ndarray, integer_mask: np.ndarray) -> int:
    """Most fractional integer variable, lowest index on ties."""
    dist = np.abs(x - np.round(x))
    cand = integer_mask & (dist > INT_TOL)
    if not cand.any():
        raise BnbError("no fractional integer variable to branch on")
    score = np.where(cand, np.minimum(x - np.floor(x), np.ceil(x) - x), -1.0)
    return int(np.argmax(score))


def branch(
    node: BnbNode,
    x: np.ndarray,
    integer_mask: np.ndarray,
    ids: tuple[int, int],
) -> tuple[BnbNode, BnbNode]:
    """Split ``node`` on its most fractional variable into (down, up) children."""
    j = select_branch_var(x, integer_mask)
    fl = math.floor(x[j])
    frac = float(x[j] - fl)
    n_int = max(int(integer_mask.sum()), 1)
    n_frac = int(np.count_nonzero(integer_mask & (np.abs(x - np.round(x)) > INT_TOL)))
    common = dict(
        parent_id=node.id,
        depth=node.depth + 1,
        branch_var=j,
        branch_frac=frac,
        parent_frac_ratio=n_frac / n_int,
    )
    down = BnbNode(ids[0], bounds=node.bounds.tighten(j, ub=fl), branch_dir=Direction.DOWN, **common)
    up = BnbNode(ids[1], bounds=node.bounds.tighten(j, lb=fl + 1), branch_dir=Direction.UP, **common)
    return down, up


# -- comparators ---------------------------------------------------------------

def _prefer_lower(va: float, vb: float) -> CompDecision:
    if va < vb:
        return CompDecision.FIRST_BETTER
    if vb < va:
        return CompDecision.SECOND_BETTER
    return CompDecision.EQUAL


def estimate_comp(a: BnbNode, b: BnbNode) -> CompDecision:
    return _prefer_lower(a.estimate, b.estimate)


def best_first_comp(a: BnbNode, b: BnbNode) -> CompDecision:
    return _prefer_lower(a.dual_bound, b.dual_bound)


def dfs_comp(a: BnbNode, b: BnbNode) -> CompDecision:
    return _prefer_lower(-a.depth, -b.depth)


def oracle_comp(a: BnbNode, b: BnbNode, x_star: np.ndarray) -> CompDecision:
    """Prefer the node whose region holds ``x_star``; otherwise best estimate."""
    in_a, in_b = a.contains(x_star), b.contains(x_star)
    if in_a and in_b:
        raise BnbError(f"optimal solution lies in both node {a.id} and node {b.id}")
    if in_a:
        return CompDecision.FIRST_BETTER
    if in_b:
        return CompDecision.SECOND_BETTER
    return estimate_comp(a, b)


class OracleComparator:
    def __init__(self, x_star: np.ndarray):
        self.x_star = np.asarray(x_star, dtype=float)

    def __call__(self, a: BnbNode, b: BnbNode) -> CompDecision:
        return oracle_comp(a, b, self.x_star)


class Comparator(Protocol):
    def __call__(self, a: BnbNode, b: BnbNode) -> CompDecision: ...


COMPARATORS: dict[str, Comparator] = {
    "estimate": estimate_comp,
    "best-first": best_first_comp,
    "dfs": dfs_comp,
}


# -- tree state and open list ----------------------------------------------------

@dataclass
class TreeState:
    """Live solve statistics visible to comparators and feature encoders."""

    inst: MilpInstance
    root_bound: float = 0.0
    incumbent: Optional[Solution] = None
    incumbent_count: int = 0
    open_count: int = 0
    nodes_processed: int = 0
    plunge_depth: int = 0
    last_focused: Optional[BnbNode] = None

    @property
    def incumbent_value(self) -> float:
        return self.incumbent.objective if self.incumbent is not None else math.inf


class OpenList:
    """Open nodes ranked by a comparator, FIFO among equals."""

    def __init__(self, comparator: Comparator):
        self.comparator = comparator
        self.items: list[BnbNode] = []
        self._seq: dict[int, int] = {}
        self._counter = 0
        self.comp_calls = 0

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def _cmp(self, a: BnbNode, b: BnbNode) -> CompDecision:
        self.comp_calls += 1
        return self.comparator(a, b)

    def insert(self, node: BnbNode) -> int:
        """Insert by binary search; returns the position taken."""
        self._seq[node.id] = self._counter
        self._counter += 1
        lo, hi = 0, len(self.items)
        while lo < hi:
            mid = (lo + hi) // 2
            if self._cmp(node, self.items[mid]) is CompDecision.FIRST_BETTER:
                hi = mid
            else:
                lo = mid + 1
        self.items.insert(lo, node)
        return lo

    def pop(self, index: int = 0) -> BnbNode:
        node = self.items.pop(index)
        del self._seq[node.id]
        return node

    def remove(self, node: BnbNode) -> None:
        self.pop(self.items.index(node))

    def filter(self, keep: Callable[[BnbNode], bool]) -> list[BnbNode]:
        dropped = [n for n in self.items if not keep(n)]
        self.items = [n for n in self.items if keep(n)]
        for n in dropped:
            del self._seq[n.id]
        return dropped

    def reorder(self, comparator: Comparator) -> None:
        self.comparator = comparator

        def cmp(a, b):
            d = self._cmp(a, b)
            if d is CompDecision.FIRST_BETTER:
                return -1
            if d is CompDecision.SECOND_BETTER:
                return 1
            return self._seq[a.id] - self._seq[b.id]

        self.items.sort(key=functools.cmp_to_key(cmp))


# -- node selection ------------------------------------------------------------

def select_plain(open_list: OpenList) -> BnbNode:
    if not len(open_list):
        raise BnbError("open list is empty")
    return open_list.items[0]


def select_scip_like(open_list: OpenList, last_focused: Optional[BnbNode]) -> BnbNode:
    """Best-ranked child of the last focused node, else sibling, else overall."""
    if not len(open_list):
        raise BnbError("open list is empty")
    if last_focused is not None:
        for n in open_list:
            if n.parent_id == last_focused.id:
                return n
        if last_focused.parent_id is not None:
            for n in open_list:
                if n.parent_id == last_focused.parent_id:
                    return n
    return open_list.items[0]


def select_hybrid(open_list: OpenList, incumbent_count: int, switch_at: int = 2) -> BnbNode:
    """Plugged ranking until ``switch_at`` solutions are found, then best estimate."""
    if incumbent_count >= switch_at and open_list.comparator is not estimate_comp:
        open_list.reorder(estimate_comp)
    return select_plain(open_list)


class Selector(Protocol):
    name: str

    def __call__(self, open_list: OpenList, tree: TreeState) -> BnbNode: ...


class PlainSelector:
    name = "plain"

    def __call__(self, open_list, tree):
        return select_plain(open_list)


class ScipLikeSelector:
    name = "scip-like"

    def __call__(self, open_list, tree):
        return select_scip_like(open_list, tree.last_focused)


class HybridSelector:
    name = "hybrid"

    def __init__(self, switch_at: int = 2):
        self.switch_at = switch_at

    def __call__(self, open_list, tree):
        return select_hybrid(open_list, tree.incumbent_count, self.switch_at)


SELECTORS: dict[str, Callable[[], Selector]] = {
    "plain": PlainSelector,
    "scip-like": ScipLikeSelector,
    "hybrid": HybridSelector,
}


# -- solve loop ----------------------------------------------------------------

@dataclass
class Limits:
    nodes: Optional[int] = 100_000
    seconds: Optional[float] = None


@dataclass
class SolveStats:
    status: SolveStatus
    incumbent: Optional[Solution]
    nodes_processed: int
    comp_calls: int
    wall_time: float
    dual_bound: float = math.nan
    lp_iterations: int = 0
    incumbent_count: int = 0

    @property
    def objective(self) -> float:
        return self.incumbent.objective if self.incumbent is not None else math.nan

    @property
    def gap(self) -> float:
        if self.incumbent is None:
            return math.inf
        return abs(self.objective - self.dual_bound) / max(abs(self.objective), 1e-10)


class _Trace:
    def __init__(self, out: Optional[TextIO]):
        self.out = out

    def __call__(self, action: str, node: Optional[BnbNode] = None, **extra):
        if self.out is None:
            return
        rec = {"action": action}
        if node is not None:
            rec.update(
                node=node.id,
                parent=node.parent_id,
                depth=node.depth,
                bound=node.dual_bound if math.isfinite(node.dual_bound) else None,
                estimate=node.estimate if math.isfinite(node.estimate) else None,
            )
        rec.update(extra)
        self.out.write(json.dumps(rec) + "\n")


def solve(
    inst: MilpInstance,
    comparator: Comparator = estimate_comp,
    selector: Optional[Selector] = None,
    limits: Optional[Limits] = None,
    *,
    warm_start: bool = False,
    trace: Optional[TextIO] = None,
) -> SolveStats:
    """Branch and bound to proven optimality or until a limit is hit."""
    selector = selector or PlainSelector()
    limits = limits or Limits()
    mask = inst.integer_mask
    tree = TreeState(inst)
    pc = PseudocostTable(inst.num_vars)
    emit = _Trace(trace)
    start = time.perf_counter()
    lp_iters = 0
    next_id = 0

    def solve_node(node: BnbNode, parent: Optional[BnbNode]) -> None:
        nonlocal lp_iters
        basis = parent.lp.basis if (warm_start and parent is not None) else None
        try:
            node.lp = solve_lp(inst, node.bounds, warm_start=basis)
        except LpNumericalError as exc:
            raise BnbError(f"{inst.name}: LP failed at node {node.id}: {exc}") from exc
        lp_iters += node.lp.iterations
        tree.nodes_processed += 1
        if node.lp.status is LpStatus.UNBOUNDED:
            raise BnbError(f"{inst.name}: LP relaxation unbounded at node {node.id}")
        if node.lp.status is LpStatus.OPTIMAL:
            node.dual_bound = lp_lower_bound(node.lp)
            if parent is not None:
                update_pseudocosts(pc, node.branch_var, node.branch_dir, parent.dual_bound,
                                   node.dual_bound, node.branch_frac)
            node.estimate = compute_estimate(node, node.lp.x, pc, mask)

    def finish(status: SolveStatus) -> SolveStats:
        bounds = [n.dual_bound for n in open_list] + [tree.incumbent_value]
        return SolveStats(
            status=status,
            incumbent=tree.incumbent,
            nodes_processed=tree.nodes_processed,
            comp_calls=open_list.comp_calls,
            wall_time=time.perf_counter() - start,
            dual_bound=min(bounds) if status is not SolveStatus.INFEASIBLE else math.inf,
            lp_iterations=lp_iters,
            incumbent_count=tree.incumbent_count,
        )

    def accept(node: BnbNode) -> None:
        """Record an integral LP solution if it strictly improves."""
        x = node.lp.x.copy()
        x[mask] = np.round(x[mask])
        sol = make_solution(inst, x)
        if sol.objective < tree.incumbent_value - PRUNE_TOL:
            tree.incumbent = sol
            tree.incumbent_count += 1
            emit("incumbent", node, objective=sol.objective)
            for n in open_list.filter(lambda n: n.dual_bound < sol.objective - PRUNE_TOL):
                emit("prune", n)

    if hasattr(comparator, "bind"):
        comparator.bind(tree)
    open_list = OpenList(comparator)

    root = BnbNode(next_id, None, 0, LocalBounds())
    next_id += 1
    solve_node(root, None)
    emit("root", root, status=root.lp.status.value)
    if root.lp.status is LpStatus.INFEASIBLE:
        return finish(SolveStatus.INFEASIBLE)
    tree.root_bound = root.dual_bound
    if is_integral(root.lp.x, mask):
        accept(root)
        return finish(SolveStatus.OPTIMAL)
    open_list.insert(root)
    tree.open_count = len(open_list)

    while len(open_list):
        if limits.nodes is not None and tree.nodes_processed >= limits.nodes:
            return finish(SolveStatus.NODE_LIMIT)
        if limits.seconds is not None and time.perf_counter() - start >= limits.seconds:
            return finish(SolveStatus.TIME_LIMIT)
        node = selector(open_list, tree)
        open_list.remove(node)
        last = tree.last_focused
        tree.plunge_depth = tree.plunge_depth + 1 if (last is not None and node.parent_id == last.id) else 0
        tree.last_focused = node
        tree.open_count = len(open_list)
        emit("select", node)
        if node.dual_bound >= tree.incumbent_value - PRUNE_TOL:
            emit("prune", node)
            continue

        children = branch(node, node.lp.x, mask, (next_id, next_id + 1))
        next_id += 2
        emit("branch", node, var=children[0].branch_var)
        to_insert = []
        for child in children:
            solve_node(child, node)
            if child.lp.status is LpStatus.INFEASIBLE:
                emit("infeasible", child)
            elif is_integral(child.lp.x, mask):
                emit("integral", child)
                accept(child)
            elif child.dual_bound >= tree.incumbent_value - PRUNE_TOL:
                emit("prune", child)
            else:
                to_insert.append(child)
        for child in to_insert:
            if child.dual_bound >= tree.incumbent_value - PRUNE_TOL:
                emit("prune", child)
                continue
            tree.open_count = len(open_list)
            pos = open_list.insert(child)
            emit("insert", child, position=pos)
        tree.open_count = len(open_list)

    if tree.incumbent is None:
        return finish(SolveStatus.INFEASIBLE)
    return finish(SolveStatus.OPTIMAL)
