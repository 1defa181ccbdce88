"""Node state encodings: bipartite graph for the GNN, fixed vector for SVM/MLP."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bnb import BnbNode, Direction, TreeState
from .milp import MilpInstance, Sense, VarType

BOUND_CLIP = 1e4
CONS_DIM = 3
VAR_DIM = 6
GLOBAL_DIM = 2
FIXED_DIM = 12

FIXED_FEATURE_NAMES = (
    "depth",
    "dual_bound",
    "estimate",
    "incumbent_gap",
    "has_incumbent",
    "branch_direction",
    "branch_fraction",
    "parent_fractional_share",
    "plunge_depth",
    "incumbent_count",
    "log_open_nodes",
    "log_nodes_processed",
)

# recorded in model checkpoints so inference matches training
NORMALIZATION = {
    "objective": "c_j / ||c||_2",
    "rows": "b_i and a_ij / ||(a_i, b_i)||_2",
    "bounds": ("(v - root_lb) / (root_ub - root_lb) when the root domain is finite with positive width, "
               f"else clip to [-{BOUND_CLIP:g}, {BOUND_CLIP:g}] / {BOUND_CLIP:g}"),
    "globals": "(value - root LP bound) / (|root LP bound| + 1)",
    "bound_clip": BOUND_CLIP,
}


class EncodingError(ValueError):
    pass


@dataclass(eq=False)
class NodeBipartiteGraph:
    cons_feats: np.ndarray   # [num_cons, 3]: rhs, is_ge, is_le
    var_feats: np.ndarray    # [num_vars, 6]: obj, lb, ub, binary, integer, continuous
    edge_cons: np.ndarray    # [nnz] int
    edge_var: np.ndarray     # [nnz] int
    edge_coef: np.ndarray    # [nnz]
    global_feats: np.ndarray  # [2]: estimate, dual bound (relative to the root bound)

    @property
    def num_cons(self) -> int:
        return self.cons_feats.shape[0]

    @property
    def num_vars(self) -> int:
        return self.var_feats.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edge_coef.shape[0]

    def equals(self, other: "NodeBipartiteGraph") -> bool:
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("cons_feats", "var_feats", "edge_cons", "edge_var", "edge_coef", "global_feats")
        )


def global_scale(root_bound: float) -> float:
    return abs(root_bound) + 1.0


class BipartiteEncoder:
    """Caches the static part of an instance's graph; only bounds and globals vary."""

    def __init__(self, inst: MilpInstance):
        self.inst = inst
        m, n = inst.num_cons, inst.num_vars
        cons = np.zeros((m, CONS_DIM))
        ec, ev, ew = [], [], []
        for i, (row, s, b) in enumerate(zip(inst.rows, inst.senses, inst.rhs)):
            coefs = np.array([v for _, v in row] + [b])
            norm = float(np.linalg.norm(coefs)) or 1.0
            cons[i, 0] = b / norm
            cons[i, 1] = 1.0 if s in (Sense.GE, Sense.EQ) else 0.0
            cons[i, 2] = 1.0 if s in (Sense.LE, Sense.EQ) else 0.0
            for j, v in row:
                ec.append(i)
                ev.append(j)
                ew.append(v / norm)
        cnorm = float(np.linalg.norm(inst.objective)) or 1.0
        var = np.zeros((n, VAR_DIM))
        var[:, 0] = inst.objective / cnorm
        for j, t in enumerate(inst.vtypes):
            var[j, 3 + (0 if t is VarType.BINARY else 1 if t is VarType.INTEGER else 2)] = 1.0
        self.cons = cons
        self.var_static = var
        lo, up = np.asarray(inst.lower, dtype=float), np.asarray(inst.upper, dtype=float)
        self._relative = np.isfinite(lo) & np.isfinite(up) & (up > lo)
        self._root_lo = np.where(self._relative, lo, 0.0)
        self._root_width = np.where(self._relative, up - lo, 1.0)
        self.edge_cons = np.array(ec, dtype=np.int64)
        self.edge_var = np.array(ev, dtype=np.int64)
        self.edge_coef = np.array(ew, dtype=float)
        for arr in (self.cons, self.edge_cons, self.edge_var, self.edge_coef):
            arr.flags.writeable = False

    def scale_bounds(self, v: np.ndarray) -> np.ndarray:
        """Position inside the root domain where that is finite, else clipped absolute scale.

        A plain ``v / 1e4`` would squash binary bounds to 1e-4 and hide every branching decision.
        """
        rel = (np.where(self._relative, v, 0.0) - self._root_lo) / self._root_width
        absolute = np.clip(v, -BOUND_CLIP, BOUND_CLIP) / BOUND_CLIP
        return np.where(self._relative, rel, absolute)

    def __call__(self, node: BnbNode, root_bound: float) -> NodeBipartiteGraph:
        if not node.solved:
            raise EncodingError(f"node {node.id} has no optimal LP relaxation")
        lo, up = node.bounds.apply(self.inst)
        var = self.var_static.copy()
        var[:, 1] = self.scale_bounds(lo)
        var[:, 2] = self.scale_bounds(up)
        scale = global_scale(root_bound)
        # shifted by the root bound so both are >= 0 and larger always means worse
        glob = np.array([(node.estimate - root_bound) / scale, (node.dual_bound - root_bound) / scale])
        if not (np.all(np.isfinite(var)) and np.all(np.isfinite(glob))):
            raise EncodingError(f"non-finite features at node {node.id}")
        return NodeBipartiteGraph(self.cons, var, self.edge_cons, self.edge_var, self.edge_coef, glob)


def encode_bipartite(inst: MilpInstance, node: BnbNode, root_bound: float) -> NodeBipartiteGraph:
    return BipartiteEncoder(inst)(node, root_bound)


def encode_fixed(inst: MilpInstance, node: BnbNode, tree: TreeState) -> np.ndarray:
    """Twelve node and tree features (names in ``FIXED_FEATURE_NAMES``)."""
    if not node.solved:
        raise EncodingError(f"node {node.id} has no optimal LP relaxation")
    scale = global_scale(tree.root_bound)
    inc = tree.incumbent
    if inc is not None:
        gap = (inc.objective - node.dual_bound) / (abs(inc.objective) + 1.0)
        flag = 1.0
    else:
        gap = flag = 0.0
    direction = 0.0 if node.branch_dir is None else float(node.branch_dir.value)
    feats = np.array([
        float(node.depth),
        node.dual_bound / scale,
        node.estimate / scale,
        gap,
        flag,
        direction,
        node.branch_frac,
        node.parent_frac_ratio,
        float(tree.plunge_depth),
        float(tree.incumbent_count),
        math.log1p(tree.open_count),
        math.log1p(tree.nodes_processed),
    ])
    if not np.all(np.isfinite(feats)):
        raise EncodingError(f"non-finite fixed features at node {node.id}")
    return feats
