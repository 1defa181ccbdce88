"""Seeded benchmark generators on Erdos-Renyi graphs.

Families:
    fcmcnf  fixed-charge multicommodity network flow, ER(n, 0.3)
    maxsat  weighted 2-clause MAXSAT derived from the edges of ER(n, 0.6)
    gisp    generalized independent set, ER(n, 0.6), half the edges removable

Every generator returns a minimization :class:`MilpInstance`; maximization
objectives are negated. Integer decision variables come first in the
variable order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .milp import MilpInstance, Sense, VarType, dumps_instance

FAMILIES = ("fcmcnf", "maxsat", "gisp")


@dataclass(frozen=True)
class ErGraph:
    n: int
    edges: tuple[tuple[int, int], ...]
    seed: int


def gen_er_graph(n: int, p: float, seed) -> ErGraph:
    """G(n, p): each unordered pair present independently with probability p."""
    if n < 2:
        raise ValueError("need at least two nodes")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.shape[0]) < p
    edges = tuple((int(u), int(v)) for u, v in zip(iu[keep], ju[keep]))
    return ErGraph(n, edges, seed if isinstance(seed, int) else -1)


# -- FCMCNF --------------------------------------------------------------------

@dataclass(frozen=True)
class FcmcnfParams:
    p: float = 0.3
    commodities_per_node: float = 1.5
    cost_low: int = 10
    cost_high: int = 100
    demand: float = 1.0
    # capacity drawn from [cap_low, cap_high] * total demand
    cap_low: float = 0.25
    cap_high: float = 0.5
    max_retries: int = 10_000


def _reachable(n: int, arcs: list[tuple[int, int]], s: int) -> set[int]:
    adj = {i: [] for i in range(n)}
    for u, v in arcs:
        adj[u].append(v)
    seen, stack = {s}, [s]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def _fcmcnf_feasible(n, arcs, comms, caps) -> bool:
    """Flow feasibility with every arc open (HiGHS, generator-side only)."""
    from scipy.optimize import linprog

    A, m = len(arcs), len(comms)
    nv = A * m
    eq_rows, eq_rhs = [], []
    for k, (s, t) in enumerate(comms):
        for v in range(n):
            row = np.zeros(nv)
            for a, (u, w) in enumerate(arcs):
                if u == v:
                    row[a * m + k] += 1.0
                if w == v:
                    row[a * m + k] -= 1.0
            eq_rows.append(row)
            eq_rhs.append(1.0 if v == s else (-1.0 if v == t else 0.0))
    ub_rows = []
    for a in range(A):
        row = np.zeros(nv)
        row[a * m:(a + 1) * m] = 1.0
        ub_rows.append(row)
    res = linprog(np.zeros(nv), A_ub=np.array(ub_rows), b_ub=np.array(caps),
                  A_eq=np.array(eq_rows), b_eq=np.array(eq_rhs), bounds=(0, None), method="highs")
    return res.status == 0


def gen_fcmcnf(n: int, seed: int, params: FcmcnfParams = FcmcnfParams()) -> MilpInstance:
    """Fixed-charge multicommodity network flow.

    Variables: binary ``y_a`` per arc (first), then continuous ``x_a^k`` per
    arc and commodity. Rows: flow conservation per node and commodity, then
    ``sum_k x_a^k - u_a y_a <= 0`` per arc.
    """
    if n < 2:
        raise ValueError("need at least two nodes")
    rng = np.random.default_rng(seed)
    m = math.ceil(params.commodities_per_node * n)
    pairs = [(s, t) for s in range(n) for t in range(n) if s != t]
    for _ in range(params.max_retries):
        g = gen_er_graph(n, params.p, int(rng.integers(2**63)))
        arcs = sorted([(u, v) for u, v in g.edges] + [(v, u) for u, v in g.edges])
        if not arcs:
            continue
        pick = rng.choice(len(pairs), size=m, replace=m > len(pairs))
        comms = [pairs[i] for i in pick]
        if not all(t in _reachable(n, arcs, s) for s, t in comms):
            continue
        total = params.demand * m
        caps = [
            float(rng.integers(math.ceil(params.cap_low * total), math.ceil(params.cap_high * total) + 1))
            for _ in arcs
        ]
        if not _fcmcnf_feasible(n, arcs, comms, caps):
            continue
        break
    else:
        raise RuntimeError(f"no feasible FCMCNF graph for n={n} after {params.max_retries} tries")

    A = len(arcs)
    var_cost = rng.integers(params.cost_low, params.cost_high + 1, size=A).astype(float)
    fix_cost = rng.integers(params.cost_low, params.cost_high + 1, size=A).astype(float)
    nv = A + A * m

    def xv(a, k):
        return A + a * m + k

    objective = np.zeros(nv)
    objective[:A] = fix_cost
    for a in range(A):
        for k in range(m):
            objective[xv(a, k)] = var_cost[a] * params.demand
    rows, senses, rhs = [], [], []
    for k, (s, t) in enumerate(comms):
        for v in range(n):
            terms = {}
            for a, (u, w) in enumerate(arcs):
                if u == v:
                    terms[xv(a, k)] = terms.get(xv(a, k), 0.0) + 1.0
                if w == v:
                    terms[xv(a, k)] = terms.get(xv(a, k), 0.0) - 1.0
            terms = {j: c for j, c in terms.items() if c != 0.0}
            if not terms:
                continue
            rows.append(tuple(sorted(terms.items())))
            senses.append(Sense.EQ)
            rhs.append(params.demand if v == s else (-params.demand if v == t else 0.0))
    for a in range(A):
        row = [(a, -caps[a])] + [(xv(a, k), 1.0) for k in range(m)]
        rows.append(tuple(sorted(row)))
        senses.append(Sense.LE)
        rhs.append(0.0)
    lower = np.zeros(nv)
    upper = np.concatenate([np.ones(A), np.full(A * m, math.inf)])
    vtypes = [VarType.BINARY] * A + [VarType.CONTINUOUS] * (A * m)
    return MilpInstance(objective, tuple(rows), tuple(senses), rhs, lower, upper, tuple(vtypes),
                        name=f"fcmcnf_n{n}_s{seed}")


def fcmcnf_nnz(inst: MilpInstance) -> int:
    """Nonzeros recounted from the variable layout (independent of ``rows``).

    Each flow variable appears in its tail and head conservation rows and in
    its arc capacity row; each open variable in its capacity row.
    """
    num_arcs = sum(1 for t in inst.vtypes if t is VarType.BINARY)
    num_flows = inst.num_vars - num_arcs
    return 3 * num_flows + num_arcs


# -- MAXSAT --------------------------------------------------------------------

def gen_maxsat(n: int, seed: int, p: float = 0.6) -> MilpInstance:
    """Two unit-weight clauses ``(u or v)`` and ``(not u or not v)`` per edge."""
    if n < 3:
        raise ValueError("need at least three nodes")
    g = gen_er_graph(n, p, seed)
    E = len(g.edges)
    nv = n + 2 * E
    objective = np.zeros(nv)
    rows, senses, rhs = [], [], []
    for e, (u, v) in enumerate(g.edges):
        zp, zn = n + 2 * e, n + 2 * e + 1
        objective[zp] = objective[zn] = -1.0
        # z <= x_u + x_v
        rows.append(((u, -1.0), (v, -1.0), (zp, 1.0)))
        senses.append(Sense.LE)
        rhs.append(0.0)
        # z <= (1 - x_u) + (1 - x_v)
        rows.append(((u, 1.0), (v, 1.0), (zn, 1.0)))
        senses.append(Sense.LE)
        rhs.append(2.0)
    return MilpInstance(objective, tuple(rows), tuple(senses), rhs, np.zeros(nv), np.ones(nv),
                        (VarType.BINARY,) * nv, name=f"maxsat_n{n}_s{seed}")


# -- GISP ----------------------------------------------------------------------

def gen_gisp(n: int, seed: int, p: float = 0.6, removable_p: float = 0.5,
             revenue: float = 100.0, removal_cost: float = 1.0) -> MilpInstance:
    """Generalized independent set with removable edges."""
    if n < 2:
        raise ValueError("need at least two nodes")
    g = gen_er_graph(n, p, seed)
    rng = np.random.default_rng([seed, 1])
    removable = rng.random(len(g.edges)) < removable_p
    n_rem = int(removable.sum())
    nv = n + n_rem
    objective = np.concatenate([np.full(n, -revenue), np.full(n_rem, removal_cost)])
    rows, senses, rhs = [], [], []
    k = n
    for (u, v), rem in zip(g.edges, removable):
        if rem:
            rows.append(((u, 1.0), (v, 1.0), (k, -1.0)))
            k += 1
        else:
            rows.append(((u, 1.0), (v, 1.0)))
        senses.append(Sense.LE)
        rhs.append(1.0)
    return MilpInstance(objective, tuple(rows), tuple(senses), rhs, np.zeros(nv), np.ones(nv),
                        (VarType.BINARY,) * nv, name=f"gisp_n{n}_s{seed}")


GENERATORS = {"fcmcnf": gen_fcmcnf, "maxsat": gen_maxsat, "gisp": gen_gisp}


# -- suites --------------------------------------------------------------------

# desk-scale size ranges (inclusive): train/test and one-size-up transfer
DESK_SIZES = {
    "fcmcnf": {"train_test": (4, 6), "transfer": (7, 7)},
    "maxsat": {"train_test": (8, 12), "transfer": (13, 14)},
    "gisp": {"train_test": (6, 10), "transfer": (11, 12)},
}
# full-scale sizes
PAPER_SIZES = {
    "fcmcnf": {"train_test": (15, 15), "transfer": (20, 20)},
    "maxsat": {"train_test": (60, 70), "transfer": (80, 100)},
    "gisp": {"train_test": (60, 70), "transfer": (70, 80)},
}


@dataclass
class GenConfig:
    family: str
    n_min: int
    n_max: int
    count: int
    seed: int = 0
    size_class: str = "train_test"

    def __post_init__(self):
        if self.family not in GENERATORS:
            raise ValueError(f"unknown family {self.family!r}")
        if self.n_min > self.n_max:
            raise ValueError("n_min exceeds n_max")

    @classmethod
    def desk(cls, family: str, count: int, seed: int = 0, size_class: str = "train_test") -> "GenConfig":
        lo, hi = DESK_SIZES[family][size_class]
        return cls(family, lo, hi, count, seed, size_class)


def suite_plan(config: GenConfig) -> list[tuple[int, int]]:
    """(n, seed) per instance, derived from the master seed."""
    ss = np.random.SeedSequence([config.seed, FAMILIES.index(config.family),
                                 0 if config.size_class == "train_test" else 1])
    rng = np.random.default_rng(ss)
    plan = []
    for _ in range(config.count):
        n = int(rng.integers(config.n_min, config.n_max + 1))
        plan.append((n, int(rng.integers(2**31 - 1))))
    return plan


def gen_suite(config: GenConfig, out_dir=None) -> tuple[list[MilpInstance], dict]:
    """Generate ``config.count`` instances; optionally write files and a manifest."""
    instances, entries = [], []
    for i, (n, seed) in enumerate(suite_plan(config)):
        inst = GENERATORS[config.family](n, seed)
        fname = f"{config.family}_{config.size_class}_{i:04d}.milp"
        text = dumps_instance(inst)
        entries.append({
            "file": fname,
            "name": inst.name,
            "n": n,
            "seed": seed,
            "num_vars": inst.num_vars,
            "num_cons": inst.num_cons,
            "sha256": hashlib.sha256(text.encode()).hexdigest(),
        })
        instances.append(inst)
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / fname).write_text(text, encoding="utf-8")
    manifest = {"config": asdict(config), "instances": entries}
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return instances, manifest


def load_suite(directory) -> tuple[list[MilpInstance], dict]:
    from .milp import read_instance

    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    return [read_instance(directory / e["file"]) for e in manifest["instances"]], manifest
