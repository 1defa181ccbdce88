"""A small reverse-mode autodiff kernel over float64 numpy arrays.

The op set is closed: exactly what the scoring models need. Each op returns a
new :class:`Tensor` holding a closure that pushes its output gradient back to
its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

BCE_CLAMP = 1e-12


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), op: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward: Optional[Callable[[], None]] = None
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Backpropagate from a scalar."""
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar output")
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            t, done = stack.pop()
            if done:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            for p in t._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for t in reversed(order):
            if t._backward is not None:
                t._backward()

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data, _parents=(a, b), op="add")

    def backward():
        a._accumulate(_unbroadcast(out.grad, a.shape))
        b._accumulate(_unbroadcast(out.grad, b.shape))

    out._backward = backward
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data, _parents=(a, b), op="sub")

    def backward():
        a._accumulate(_unbroadcast(out.grad, a.shape))
        b._accumulate(-_unbroadcast(out.grad, b.shape))

    out._backward = backward
    return out


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check(a.data.ndim == 2 and b.data.ndim == 2 and a.shape[1] == b.shape[0],
           f"matmul shapes {a.shape} and {b.shape} do not align")
    out = Tensor(a.data @ b.data, _parents=(a, b), op="matmul")

    def backward():
        a._accumulate(out.grad @ b.data.T)
        b._accumulate(a.data.T @ out.grad)

    out._backward = backward
    return out


def dense_forward(W, b, X) -> Tensor:
    """``X @ W + b`` for rows of ``X``."""
    W, b, X = _as_tensor(W), _as_tensor(b), _as_tensor(X)
    _check(X.data.ndim == 2 and W.data.ndim == 2 and X.shape[1] == W.shape[0],
           f"dense: input {X.shape} does not match weight {W.shape}")
    _check(b.shape == (W.shape[1],), f"dense: bias {b.shape} does not match weight {W.shape}")
    return add(matmul(X, W), b)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0), _parents=(x,), op="relu")

    def backward():
        x._accumulate(out.grad * (x.data > 0.0))

    out._backward = backward
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    s = _sigmoid(x.data)
    out = Tensor(s, _parents=(x,), op="sigmoid")

    def backward():
        x._accumulate(out.grad * s * (1.0 - s))

    out._backward = backward
    return out


def l2_norm(x) -> Tensor:
    """Euclidean norm along the last axis (a vector gives a scalar)."""
    x = _as_tensor(x)
    norm = np.sqrt(np.sum(x.data ** 2, axis=-1))
    out = Tensor(norm, _parents=(x,), op="l2_norm")

    def backward():
        safe = np.where(norm > 0.0, norm, 1.0)
        g = np.where(norm > 0.0, out.grad / safe, 0.0)
        x._accumulate(x.data * g[..., None])

    out._backward = backward
    return out


def mean_pool(rows) -> Tensor:
    """Mean over rows of a matrix."""
    rows = _as_tensor(rows)
    _check(rows.data.ndim == 2 and rows.shape[0] > 0, "mean_pool needs a non-empty matrix")
    k = rows.shape[0]
    out = Tensor(rows.data.mean(axis=0), _parents=(rows,), op="mean_pool")

    def backward():
        rows._accumulate(np.broadcast_to(out.grad / k, rows.shape))

    out._backward = backward
    return out


def spmm(S: sp.spmatrix, x) -> Tensor:
    """Constant sparse matrix times dense tensor."""
    x = _as_tensor(x)
    _check(S.shape[1] == x.shape[0], f"spmm shapes {S.shape} and {x.shape} do not align")
    out = Tensor(np.asarray(S @ x.data), _parents=(x,), op="spmm")
    St = S.T.tocsr()

    def backward():
        x._accumulate(np.asarray(St @ out.grad))

    out._backward = backward
    return out


def segment_mean(x, segments: np.ndarray, num_segments: int) -> Tensor:
    """Row means per segment id; an empty segment pools to zeros."""
    segments = np.asarray(segments, dtype=np.int64)
    counts = np.maximum(np.bincount(segments, minlength=num_segments), 1).astype(float)
    P = sp.csr_matrix((1.0 / counts[segments], (segments, np.arange(len(segments)))),
                      shape=(num_segments, len(segments)))
    return spmm(P, x)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in ts], axis=axis), _parents=tuple(ts), op="concat")
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward():
        for t, g in zip(ts, np.split(out.grad, sizes, axis=axis)):
            t._accumulate(g)

    out._backward = backward
    return out


def weighted_bce(p, labels, weights) -> Tensor:
    """Weight-normalized binary cross-entropy over a batch of probabilities.

    Probabilities are clamped to ``[1e-12, 1 - 1e-12]``; the clamp passes no
    gradient where it is active.
    """
    p = _as_tensor(p)
    y = np.broadcast_to(np.asarray(labels, dtype=float), p.shape)
    w = np.broadcast_to(np.asarray(weights, dtype=float), p.shape)
    pc = np.clip(p.data, BCE_CLAMP, 1.0 - BCE_CLAMP)
    wsum = float(w.sum())
    _check(wsum > 0, "weights must sum to a positive value")
    losses = -w * (y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    out = Tensor(losses.sum() / wsum, _parents=(p,), op="weighted_bce")

    def backward():
        inside = (p.data >= BCE_CLAMP) & (p.data <= 1.0 - BCE_CLAMP)
        g = -w * (y / pc - (1.0 - y) / (1.0 - pc)) / wsum
        p._accumulate(out.grad * g * inside)

    out._backward = backward
    return out


def bipartite_conv(cons_h, var_h, S: sp.spmatrix, params: dict) -> tuple[Tensor, Tensor]:
    """One round of message passing: variables to constraints, then back.

    ``S`` is the ``[num_cons, num_vars]`` edge-coefficient matrix. Each side
    computes ``relu(h W_self + (sum_j e_ij h_j) W_neigh + bias)``; the
    variable half uses the updated constraint states.
    """
    cons_h, var_h = _as_tensor(cons_h), _as_tensor(var_h)
    _check(S.shape == (cons_h.shape[0], var_h.shape[0]), "edge matrix does not match vertex counts")
    cons_new = relu(add(add(matmul(cons_h, params["cons_self"]),
                            matmul(spmm(S, var_h), params["cons_neigh"])),
                        params["cons_bias"]))
    var_new = relu(add(add(matmul(var_h, params["var_self"]),
                           matmul(spmm(S.T.tocsr(), cons_new), params["var_neigh"])),
                       params["var_bias"]))
    return cons_new, var_new


def edge_matrix(edge_cons, edge_var, edge_coef, num_cons: int, num_vars: int) -> sp.csr_matrix:
    edge_cons = np.asarray(edge_cons, dtype=np.int64)
    edge_var = np.asarray(edge_var, dtype=np.int64)
    if edge_cons.size and (edge_cons.min() < 0 or edge_cons.max() >= num_cons):
        raise IndexError("edge constraint index out of range")
    if edge_var.size and (edge_var.min() < 0 or edge_var.max() >= num_vars):
        raise IndexError("edge variable index out of range")
    return sp.csr_matrix((np.asarray(edge_coef, dtype=float), (edge_cons, edge_var)),
                         shape=(num_cons, num_vars))


# -- initialization and optimization -------------------------------------------

def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam update, in place on ``params``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}")
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name} {params[name].shape}")
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def collect_grads(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
