"""Finite-difference gradient checks for every tensor op and the GNN pair loss."""

from types import SimpleNamespace

import numpy as np
import scipy.sparse as sp

from nodesel import tensor as T
from nodesel.encoding import CONS_DIM, GLOBAL_DIM, VAR_DIM, NodeBipartiteGraph
from nodesel.models import GnnScorer, _pair_loss
from oracles import rel_err

H = 1e-6


def grad_check(loss_fn, params, rng=None, max_entries=None, h=H) -> float:
    """Worst relative error between backprop and central differences.

    With ``max_entries`` only that many random entries per parameter are perturbed.
    """
    for p in params.values():
        p.zero_grad()
    loss_fn().backward()
    worst = 0.0
    for p in params.values():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = list(np.ndindex(p.shape))
        if max_entries is not None and len(flat) > max_entries:
            flat = [flat[i] for i in rng.choice(len(flat), max_entries, replace=False)]
        for idx in flat:
            old = p.data[idx]
            p.data[idx] = old + h
            fp = loss_fn().item()
            p.data[idx] = old - h
            fm = loss_fn().item()
            p.data[idx] = old
            worst = max(worst, rel_err(analytic[idx], (fp - fm) / (2 * h)))
    return worst


def _param(x):
    return T.Tensor(np.array(x, dtype=float), requires_grad=True)


def projector(rng, rows, cols):
    """Scalar ``u^T Y v`` with ``u``, ``v`` drawn once."""
    u = T.Tensor(rng.normal(size=(1, rows)))
    v = T.Tensor(rng.normal(size=(cols, 1)))
    return lambda y: T.matmul(T.matmul(u, y), v)


def _away_from_zero(rng, shape, margin=0.05):
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(margin, 2.0, size=shape)


def random_sparse(rng, rows, cols, density=0.4):
    mask = rng.random((rows, cols)) < density
    return sp.csr_matrix(np.where(mask, rng.normal(size=(rows, cols)), 0.0))


def random_graph(rng, max_cons=5, max_vars=6) -> NodeBipartiteGraph:
    m, n = int(rng.integers(1, max_cons + 1)), int(rng.integers(1, max_vars + 1))
    S = random_sparse(rng, m, n).tocoo()
    # feature ranges as produced by the encoder
    return NodeBipartiteGraph(rng.uniform(-1, 1, size=(m, CONS_DIM)), rng.uniform(-1, 1, size=(n, VAR_DIM)),
                              S.row.astype(np.int64), S.col.astype(np.int64), np.clip(S.data, -1, 1),
                              rng.uniform(0.0, 1.0, size=GLOBAL_DIM))


def random_gnn(rng) -> GnnScorer:
    model = GnnScorer.init(int(rng.integers(2**31)))
    for p in model.params.values():
        if p.data.ndim == 1:
            p.data[:] = rng.normal(scale=0.1, size=p.shape)
    return model


def op_cases(rng):
    """(name, loss_fn, params) per op on random shapes."""
    r, k, c = (int(v) for v in rng.integers(1, 6, size=3))
    cases = []

    a, b = _param(rng.normal(size=(r, c))), _param(rng.normal(size=c))
    cases.append(("add", (lambda P=projector(rng, r, c): P(T.add(a, b))), {"a": a, "b": b}))
    a2, b2 = _param(rng.normal(size=(r, c))), _param(rng.normal(size=(r, c)))
    cases.append(("sub", (lambda P=projector(rng, r, c): P(T.sub(a2, b2))), {"a": a2, "b": b2}))
    m1, m2 = _param(rng.normal(size=(r, k))), _param(rng.normal(size=(k, c)))
    cases.append(("matmul", (lambda P=projector(rng, r, c): P(T.matmul(m1, m2))), {"a": m1, "b": m2}))
    W, bb, X = _param(rng.normal(size=(k, c))), _param(rng.normal(size=c)), _param(rng.normal(size=(r, k)))
    cases.append(("dense_forward", (lambda P=projector(rng, r, c): P(T.dense_forward(W, bb, X))),
                  {"W": W, "b": bb, "X": X}))
    xr = _param(_away_from_zero(rng, (r, c)))
    cases.append(("relu", (lambda P=projector(rng, r, c): P(T.relu(xr))), {"x": xr}))
    xs = _param(rng.normal(scale=3, size=(r, c)))
    cases.append(("sigmoid", (lambda P=projector(rng, r, c): P(T.sigmoid(xs))), {"x": xs}))
    xn = _param(_away_from_zero(rng, (r, c)))
    cases.append(("l2_norm", lambda: T.l2_norm(T.l2_norm(xn)), {"x": xn}))
    xm = _param(rng.normal(size=(r, c)))
    cases.append(("mean_pool", lambda: T.l2_norm(T.mean_pool(xm)), {"x": xm}))
    S = random_sparse(rng, r, k)
    xk = _param(rng.normal(size=(k, c)))
    cases.append(("spmm", (lambda P=projector(rng, r, c): P(T.spmm(S, xk))), {"x": xk}))
    seg = rng.integers(0, r + 1, size=k)          # segment r + 1 may stay empty
    xg = _param(rng.normal(size=(k, c)))
    cases.append(("segment_mean", (lambda P=projector(rng, r + 2, c): P(T.segment_mean(xg, seg, r + 2))), {"x": xg}))
    c1, c2 = _param(rng.normal(size=(r, k))), _param(rng.normal(size=(r, c)))
    cases.append(("concat", (lambda P=projector(rng, r, k + c): P(T.concat([c1, c2], axis=1))), {"a": c1, "b": c2}))
    c3 = _param(rng.normal(size=(k, k)))
    cases.append(("concat_rows", (lambda P=projector(rng, r + k, k): P(T.concat([m1, c3], axis=0))),
                  {"a": m1, "b": c3}))
    p = _param(rng.uniform(0.05, 0.95, size=(r, 1)))
    labels = rng.integers(0, 2, size=(r, 1))
    weights = rng.uniform(0.1, 5.0, size=(r, 1))
    cases.append(("weighted_bce", lambda: T.weighted_bce(p, labels, weights), {"p": p}))

    m, n, din, dout = int(rng.integers(1, 5)), int(rng.integers(1, 6)), int(rng.integers(1, 5)), int(rng.integers(1, 5))
    Sc = random_sparse(rng, m, n)
    ch, vh = _param(rng.normal(size=(m, din))), _param(rng.normal(size=(n, din)))
    conv = {"cons_self": _param(rng.normal(size=(din, dout))), "cons_neigh": _param(rng.normal(size=(din, dout))),
            "cons_bias": _param(rng.normal(size=dout)), "var_self": _param(rng.normal(size=(din, dout))),
            "var_neigh": _param(rng.normal(size=(dout, dout))), "var_bias": _param(rng.normal(size=dout))}

    pc, pv = projector(rng, m, dout), projector(rng, n, dout)

    def conv_loss():
        cn, vn = T.bipartite_conv(ch, vh, Sc, conv)
        return T.add(pc(cn), pv(vn))

    cases.append(("bipartite_conv", conv_loss, {"cons_h": ch, "var_h": vh, **conv}))
    return cases


def gnn_loss_case(rng, batch=3):
    model = random_gnn(rng)
    samples = [SimpleNamespace(graph_a=random_graph(rng), graph_b=random_graph(rng),
                               label=int(rng.integers(2)), weight=float(rng.uniform(0.5, 3.0)))
               for _ in range(batch)]
    return lambda: _pair_loss(model, samples), model.params

