"""Node scoring functions g, the siamese comparator built on them, training and checkpoints.

Every model maps one node to a scalar score; a pair is compared through
``f(a, b) = sigmoid(g(a) - g(b))`` and the first node wins when ``f <= 0.5``.
Label 0 in a training sample means the first node is the better one.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np
import scipy.sparse as sp

from .bnb import BnbNode, CompDecision, TreeState
from .encoding import (
    CONS_DIM,
    FIXED_DIM,
    FIXED_FEATURE_NAMES,
    GLOBAL_DIM,
    NORMALIZATION,
    VAR_DIM,
    BipartiteEncoder,
    NodeBipartiteGraph,
    encode_fixed,
)
from .tensor import (
    AdamState,
    Tensor,
    _sigmoid,
    adam_step,
    bipartite_conv,
    collect_grads,
    concat,
    dense_forward,
    glorot,
    l2_norm,
    relu,
    segment_mean,
    sigmoid,
    sub,
    weighted_bce,
)

log = logging.getLogger(__name__)

EMBED_DIM = 32
CONV_WIDTHS = (8, 4, 4)
MLP_HIDDEN = 32
SVM_LAMBDA = 1e-4
CHECKPOINT_VERSION = 1
PARAMS_MAGIC = b"NSPARAM1"
CONCAT_ORDER = ("cons_pool", "var_pool", "globals")


class ModelError(ValueError):
    pass


class PairSample(Protocol):
    """What training and evaluation need from a recorded comparison."""

    graph_a: NodeBipartiteGraph
    graph_b: NodeBipartiteGraph
    fixed_a: np.ndarray
    fixed_b: np.ndarray
    label: int
    weight: float
    instance_id: str


# -- siamese rule ----------------------------------------------------------------

def siamese_prob(g_a, g_b):
    """``sigmoid(g_a - g_b)``; works elementwise on arrays."""
    return _sigmoid(np.asarray(g_a, dtype=float) - np.asarray(g_b, dtype=float))


def decide(g_a: float, g_b: float) -> CompDecision:
    return CompDecision.FIRST_BETTER if siamese_prob(g_a, g_b) <= 0.5 else CompDecision.SECOND_BETTER


# -- graph batching --------------------------------------------------------------

@dataclass
class GraphBatch:
    cons: np.ndarray
    var: np.ndarray
    S: sp.csr_matrix
    cons_seg: np.ndarray
    var_seg: np.ndarray
    globals_: np.ndarray
    size: int


def batch_graphs(graphs: Sequence[NodeBipartiteGraph]) -> GraphBatch:
    """Stack graphs into one disconnected graph with a block-diagonal edge matrix."""
    if not graphs:
        raise ModelError("cannot batch zero graphs")
    mc = [g.num_cons for g in graphs]
    nv = [g.num_vars for g in graphs]
    co = np.concatenate([[0], np.cumsum(mc)[:-1]]).astype(np.int64)
    vo = np.concatenate([[0], np.cumsum(nv)[:-1]]).astype(np.int64)
    for g in graphs:
        if g.cons_feats.shape[1] != CONS_DIM or g.var_feats.shape[1] != VAR_DIM or g.global_feats.shape != (GLOBAL_DIM,):
            raise ModelError("graph feature dimensions do not match the embeddings")
    rows = np.concatenate([g.edge_cons + o for g, o in zip(graphs, co)])
    cols = np.concatenate([g.edge_var + o for g, o in zip(graphs, vo)])
    vals = np.concatenate([g.edge_coef for g in graphs])
    S = sp.csr_matrix((vals, (rows, cols)), shape=(sum(mc), sum(nv)))
    return GraphBatch(
        cons=np.concatenate([g.cons_feats for g in graphs]),
        var=np.concatenate([g.var_feats for g in graphs]),
        S=S,
        cons_seg=np.repeat(np.arange(len(graphs)), mc),
        var_seg=np.repeat(np.arange(len(graphs)), nv),
        globals_=np.stack([g.global_feats for g in graphs]),
        size=len(graphs),
    )


# -- scorers ---------------------------------------------------------------------

class Scorer:
    """Common interface: ``forward`` builds a differentiable score column."""

    kind = ""
    uses_graph = False
    params: dict[str, Tensor]

    def forward(self, graphs: Sequence[NodeBipartiteGraph], fixed: np.ndarray) -> Tensor:
        raise NotImplementedError

    def scores(self, graphs: Sequence[NodeBipartiteGraph] | None, fixed: np.ndarray | None) -> np.ndarray:
        return self.forward(graphs, fixed).data.reshape(-1)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def manifest_extra(self) -> dict:
        return {}


def _params_from(arrays: dict[str, np.ndarray]) -> dict[str, Tensor]:
    return {k: Tensor(np.array(v, dtype=np.float64), requires_grad=True) for k, v in arrays.items()}


class GnnScorer(Scorer):
    kind = "gnn"
    uses_graph = True

    def __init__(self, arrays: dict[str, np.ndarray]):
        expected = gnn_param_shapes()
        if set(arrays) != set(expected):
            raise ModelError(f"GNN parameters mismatch: {sorted(set(arrays) ^ set(expected))}")
        for k, shape in expected.items():
            if np.shape(arrays[k]) != shape:
                raise ModelError(f"GNN parameter {k} has shape {np.shape(arrays[k])}, expected {shape}")
        self.params = _params_from(arrays)

    @classmethod
    def init(cls, seed: int) -> "GnnScorer":
        rng = np.random.default_rng(seed)
        arrays = {}
        for k, shape in gnn_param_shapes().items():
            arrays[k] = glorot(rng, *shape) if len(shape) == 2 else np.zeros(shape)
        # the global layer starts as the identity, i.e. globals fed straight to the norm
        arrays["global_w"] = np.eye(GLOBAL_DIM)
        return cls(arrays)

    def forward(self, graphs, fixed=None) -> Tensor:
        b = graphs if isinstance(graphs, GraphBatch) else batch_graphs(graphs)
        p = self.params
        cons = relu(dense_forward(p["cons_embed_w"], p["cons_embed_b"], Tensor(b.cons)))
        var = relu(dense_forward(p["var_embed_w"], p["var_embed_b"], Tensor(b.var)))
        for k in range(len(CONV_WIDTHS)):
            layer = {name: p[f"conv{k}_{name}"] for name in
                     ("cons_self", "cons_neigh", "cons_bias", "var_self", "var_neigh", "var_bias")}
            cons, var = bipartite_conv(cons, var, b.S, layer)
        pooled = concat([segment_mean(cons, b.cons_seg, b.size),
                         segment_mean(var, b.var_seg, b.size),
                         relu(dense_forward(p["global_w"], p["global_b"], Tensor(b.globals_)))], axis=1)
        return l2_norm(pooled)

    def manifest_extra(self) -> dict:
        return {"concat_order": list(CONCAT_ORDER)}


def gnn_param_shapes() -> dict[str, tuple[int, ...]]:
    shapes = {
        "cons_embed_w": (CONS_DIM, EMBED_DIM), "cons_embed_b": (EMBED_DIM,),
        "var_embed_w": (VAR_DIM, EMBED_DIM), "var_embed_b": (EMBED_DIM,),
        "global_w": (GLOBAL_DIM, GLOBAL_DIM), "global_b": (GLOBAL_DIM,),
    }
    width = EMBED_DIM
    for k, out in enumerate(CONV_WIDTHS):
        shapes.update({
            f"conv{k}_cons_self": (width, out), f"conv{k}_cons_neigh": (width, out), f"conv{k}_cons_bias": (out,),
            f"conv{k}_var_self": (width, out), f"conv{k}_var_neigh": (out, out), f"conv{k}_var_bias": (out,),
        })
        width = out
    return shapes


@dataclass
class FeatureScaler:
    """Per-feature standardization fitted on training nodes."""

    mean: np.ndarray = field(default_factory=lambda: np.zeros(FIXED_DIM))
    std: np.ndarray = field(default_factory=lambda: np.ones(FIXED_DIM))

    @classmethod
    def fit(cls, rows: np.ndarray) -> "FeatureScaler":
        mean = rows.mean(axis=0)
        std = rows.std(axis=0)
        std = np.where(std > 1e-8, std, 1.0)
        return cls(mean, std)

    def __call__(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.shape[1] != FIXED_DIM:
            raise ModelError(f"expected {FIXED_DIM} fixed features, got {rows.shape[1]}")
        return (rows - self.mean) / self.std

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "features": list(FIXED_FEATURE_NAMES)}

    @classmethod
    def from_json(cls, d: dict) -> "FeatureScaler":
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float))


class MlpScorer(Scorer):
    kind = "mlp"

    def __init__(self, arrays: dict[str, np.ndarray], scaler: Optional[FeatureScaler] = None):
        shapes = {"w1": (FIXED_DIM, MLP_HIDDEN), "b1": (MLP_HIDDEN,), "w2": (MLP_HIDDEN, 1), "b2": (1,)}
        for k, shape in shapes.items():
            if k not in arrays or np.shape(arrays[k]) != shape:
                raise ModelError(f"MLP parameter {k} missing or not of shape {shape}")
        self.params = _params_from(arrays)
        self.scaler = scaler or FeatureScaler()

    @classmethod
    def init(cls, seed: int, scaler: Optional[FeatureScaler] = None) -> "MlpScorer":
        rng = np.random.default_rng(seed)
        return cls({"w1": glorot(rng, FIXED_DIM, MLP_HIDDEN), "b1": np.zeros(MLP_HIDDEN),
                    "w2": glorot(rng, MLP_HIDDEN, 1), "b2": np.zeros(1)}, scaler)

    def forward(self, graphs, fixed) -> Tensor:
        p = self.params
        h = relu(dense_forward(p["w1"], p["b1"], Tensor(self.scaler(fixed))))
        return dense_forward(p["w2"], p["b2"], h)

    def manifest_extra(self) -> dict:
        return {"feature_scaler": self.scaler.to_json()}


class SvmScorer(Scorer):
    """Linear score ``w . standardize(phi) + b``; the bias cancels in every comparison."""

    kind = "svm"

    def __init__(self, arrays: dict[str, np.ndarray], scaler: Optional[FeatureScaler] = None):
        if np.shape(arrays.get("w")) != (FIXED_DIM,) or np.shape(arrays.get("b")) != (1,):
            raise ModelError("SVM parameters must be w[12] and b[1]")
        if not all(np.all(np.isfinite(v)) for v in arrays.values()):
            raise ModelError("SVM parameters must be finite")
        self.params = _params_from(arrays)
        self.scaler = scaler or FeatureScaler()

    def forward(self, graphs, fixed) -> Tensor:
        X = Tensor(self.scaler(fixed))
        return dense_forward(Tensor(self.params["w"].data.reshape(-1, 1)), self.params["b"], X)

    def manifest_extra(self) -> dict:
        return {"feature_scaler": self.scaler.to_json(), "lambda": SVM_LAMBDA}


MODEL_KINDS = {"gnn": GnnScorer, "mlp": MlpScorer, "svm": SvmScorer}


def pair_scores(model: Scorer, samples: Sequence[PairSample]) -> tuple[np.ndarray, np.ndarray]:
    """Scores of the first and second node of every sample."""
    if model.uses_graph:
        ga = model.scores([s.graph_a for s in samples], None)
        gb = model.scores([s.graph_b for s in samples], None)
    else:
        ga = model.scores(None, np.stack([s.fixed_a for s in samples]))
        gb = model.scores(None, np.stack([s.fixed_b for s in samples]))
    return ga, gb


def predict_labels(model: Scorer, samples: Sequence[PairSample], chunk: int = 256) -> np.ndarray:
    """0 where the model prefers the first node, else 1."""
    out = []
    for i in range(0, len(samples), chunk):
        ga, gb = pair_scores(model, samples[i:i + chunk])
        out.append((siamese_prob(ga, gb) > 0.5).astype(np.int64))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


# -- comparator adapter ----------------------------------------------------------

class ModelComparator:
    """Turns a scorer into a node comparator for the B&B engine.

    One instance serves one solve at a time; ``bind`` resets it for a new tree.
    """

    def __init__(self, model: Scorer):
        self.model = model
        self.tree: Optional[TreeState] = None
        self._encoder: Optional[BipartiteEncoder] = None
        self._cache: dict[int, float] = {}

    def bind(self, tree: TreeState) -> None:
        self.tree = tree
        self._encoder = BipartiteEncoder(tree.inst) if self.model.uses_graph else None
        self._cache = {}

    def score(self, node: BnbNode) -> float:
        if self.tree is None:
            raise ModelError("comparator is not bound to a solve")
        if self.model.uses_graph:
            # a solved node's graph never changes, so its score can be reused
            if node.id not in self._cache:
                g = self._encoder(node, self.tree.root_bound)
                self._cache[node.id] = float(self.model.scores([g], None)[0])
            return self._cache[node.id]
        phi = encode_fixed(self.tree.inst, node, self.tree)
        return float(self.model.scores(None, phi[None, :])[0])

    def __call__(self, a: BnbNode, b: BnbNode) -> CompDecision:
        return decide(self.score(a), self.score(b))


def model_nodecomp(model: Scorer, a_graph, a_fixed, b_graph, b_fixed) -> CompDecision:
    """Decision for one pair of already encoded nodes."""
    if model.uses_graph:
        ga, gb = model.scores([a_graph, b_graph], None)
    else:
        ga, gb = model.scores(None, np.stack([a_fixed, b_fixed]))
    return decide(ga, gb)


# -- training --------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 0
    val_fraction: float = 0.1
    svm_iters: int = 5000

    def to_json(self) -> dict:
        return dict(self.__dict__)


def split_by_instance(samples: Sequence[PairSample], val_fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Index split with whole instances on one side; falls back to no holdout below 2 instances."""
    ids = sorted({s.instance_id for s in samples})
    if len(ids) < 2 or val_fraction <= 0:
        idx = list(range(len(samples)))
        return idx, idx
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    n_val = min(len(ids) - 1, max(1, round(val_fraction * len(ids))))
    val_ids = {ids[i] for i in order[:n_val]}
    train = [i for i, s in enumerate(samples) if s.instance_id not in val_ids]
    val = [i for i, s in enumerate(samples) if s.instance_id in val_ids]
    return train, val


def _check_dataset(samples: Sequence[PairSample]) -> None:
    if not samples:
        raise ModelError("training dataset is empty")
    for s in samples:
        if s.label not in (0, 1):
            raise ModelError(f"label must be 0 or 1, got {s.label}")
        if not s.weight > 0:
            raise ModelError(f"sample weights must be positive, got {s.weight}")


def _pair_loss(model: Scorer, batch: Sequence[PairSample]) -> Tensor:
    if model.uses_graph:
        ga = model.forward([s.graph_a for s in batch], None)
        gb = model.forward([s.graph_b for s in batch], None)
    else:
        ga = model.forward(None, np.stack([s.fixed_a for s in batch]))
        gb = model.forward(None, np.stack([s.fixed_b for s in batch]))
    p = sigmoid(sub(ga, gb))
    labels = np.array([s.label for s in batch], dtype=float).reshape(p.shape)
    weights = np.array([s.weight for s in batch], dtype=float).reshape(p.shape)
    return weighted_bce(p, labels, weights)


def _accuracy(model: Scorer, samples: Sequence[PairSample]) -> float:
    labels = np.array([s.label for s in samples])
    return float(np.mean(predict_labels(model, samples) == labels))


def _fit_scaler(samples: Sequence[PairSample]) -> FeatureScaler:
    return FeatureScaler.fit(np.concatenate([np.stack([s.fixed_a for s in samples]),
                                             np.stack([s.fixed_b for s in samples])]))


def _train_siamese(model: Scorer, samples: Sequence[PairSample], cfg: TrainConfig) -> Scorer:
    train_idx, val_idx = split_by_instance(samples, cfg.val_fraction, cfg.seed)
    train = [samples[i] for i in train_idx]
    val = [samples[i] for i in val_idx]
    rng = np.random.default_rng([cfg.seed, 7])
    state = AdamState(lr=cfg.lr)
    best = (-1.0, {k: v.copy() for k, v in model.arrays().items()}, 0)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train[i] for i in order[start:start + cfg.batch_size]]
            for p in model.params.values():
                p.zero_grad()
            loss = _pair_loss(model, batch)
            if not math.isfinite(loss.item()):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
            loss.backward()
            adam_step(model.params, collect_grads(model.params), state)
            total += loss.item() * len(batch)
        acc = _accuracy(model, val)
        history.append({"epoch": epoch, "train_loss": total / len(train), "val_accuracy": acc})
        log.info("%s epoch %d loss %.4f val acc %.4f", model.kind, epoch, total / len(train), acc)
        if acc > best[0]:
            best = (acc, {k: v.copy() for k, v in model.arrays().items()}, epoch)
    for k, v in best[1].items():
        model.params[k].data[...] = v
    model.training = {
        "config": cfg.to_json(),
        "train_samples": len(train),
        "val_samples": len(val),
        "best_epoch": best[2],
        "val_accuracy": best[0],
        "history": history,
    }
    return model


def gnn_train(samples: Sequence[PairSample], cfg: Optional[TrainConfig] = None) -> GnnScorer:
    cfg = cfg or TrainConfig()
    _check_dataset(samples)
    return _train_siamese(GnnScorer.init(cfg.seed), samples, cfg)


def mlp_train(samples: Sequence[PairSample], cfg: Optional[TrainConfig] = None) -> MlpScorer:
    cfg = cfg or TrainConfig()
    _check_dataset(samples)
    train_idx, _ = split_by_instance(samples, cfg.val_fraction, cfg.seed)
    scaler = _fit_scaler([samples[i] for i in train_idx])
    return _train_siamese(MlpScorer.init(cfg.seed, scaler), samples, cfg)


def svm_train(samples: Sequence[PairSample], cfg: Optional[TrainConfig] = None) -> SvmScorer:
    """Weighted linear hinge loss on standardized differences, full-batch subgradient descent.

    Steps are ``1 / (lambda t)`` with projection onto the ball of radius
    ``1 / sqrt(lambda)``, which holds the minimizer. Keeps the iterate with the
    lowest regularized objective.
    """
    cfg = cfg or TrainConfig()
    _check_dataset(samples)
    scaler = _fit_scaler(samples)
    D = scaler(np.stack([s.fixed_a for s in samples])) - scaler(np.stack([s.fixed_b for s in samples]))
    # label 1 means the first node scores higher, so its sign is +1
    y = np.array([1.0 if s.label == 1 else -1.0 for s in samples])
    wts = np.array([s.weight for s in samples], dtype=float)
    wts = wts / wts.sum()
    w = np.zeros(FIXED_DIM)

    def objective(w):
        return 0.5 * SVM_LAMBDA * w @ w + wts @ np.maximum(0.0, 1.0 - y * (D @ w))

    radius = 1.0 / math.sqrt(SVM_LAMBDA)
    best_w, best_obj = w.copy(), objective(w)
    for t in range(1, cfg.svm_iters + 1):
        active = (y * (D @ w)) < 1.0
        g = SVM_LAMBDA * w - (wts * y * active) @ D
        w = w - g / (SVM_LAMBDA * t)
        norm = float(np.linalg.norm(w))
        if norm > radius:
            w *= radius / norm
        obj = objective(w)
        if not math.isfinite(obj):
            raise FloatingPointError("non-finite SVM objective")
        if obj < best_obj:
            best_w, best_obj = w.copy(), obj
    model = SvmScorer({"w": best_w, "b": np.zeros(1)}, scaler)
    model.training = {"config": cfg.to_json(), "train_samples": len(samples), "objective": best_obj}
    return model


TRAINERS = {"gnn": gnn_train, "mlp": mlp_train, "svm": svm_train}


# -- checkpoints -----------------------------------------------------------------

def _pack_params(arrays: dict[str, np.ndarray]) -> bytes:
    out = [PARAMS_MAGIC, struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        nb = name.encode()
        out.append(struct.pack("<I", len(nb)) + nb + struct.pack("<I", a.ndim))
        out.append(struct.pack(f"<{a.ndim}Q", *a.shape) + a.tobytes())
    return b"".join(out)


def _unpack_params(blob: bytes) -> dict[str, np.ndarray]:
    if not blob.startswith(PARAMS_MAGIC):
        raise ModelError("parameter blob has a bad header")
    pos = len(PARAMS_MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(blob):
            raise ModelError("parameter blob is truncated")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(count):
        (ln,) = struct.unpack("<I", take(4))
        name = take(ln).decode()
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(blob):
        raise ModelError("parameter blob has trailing bytes")
    return arrays


def save_model(model: Scorer, path: str | Path) -> Path:
    """Write ``manifest.json`` and ``params.bin``; bytes depend only on the model."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blob = _pack_params(model.arrays())
    manifest = {
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "architecture": architecture(model.kind),
        "normalization": NORMALIZATION,
        "params": {k: list(v.shape) for k, v in sorted(model.arrays().items())},
        "params_sha256": hashlib.sha256(blob).hexdigest(),
        "training": getattr(model, "training", {}),
        **model.manifest_extra(),
    }
    (path / "params.bin").write_bytes(blob)
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_model(path: str | Path) -> Scorer:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
        blob = (path / "params.bin").read_bytes()
    except FileNotFoundError as exc:
        raise ModelError(f"no checkpoint at {path}: {exc.filename} missing") from exc
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ModelError(f"checkpoint version {manifest.get('version')} is not {CHECKPOINT_VERSION}")
    if hashlib.sha256(blob).hexdigest() != manifest["params_sha256"]:
        raise ModelError("parameter blob does not match the manifest hash")
    arrays = _unpack_params(blob)
    kind = manifest["kind"]
    if kind == "gnn":
        model = GnnScorer(arrays)
    elif kind in ("mlp", "svm"):
        model = MODEL_KINDS[kind](arrays, FeatureScaler.from_json(manifest["feature_scaler"]))
    else:
        raise ModelError(f"unknown model kind {kind!r}")
    model.training = manifest.get("training", {})
    return model


def architecture(kind: str) -> dict:
    if kind == "gnn":
        return {"cons_dim": CONS_DIM, "var_dim": VAR_DIM, "global_dim": GLOBAL_DIM,
                "embed": EMBED_DIM, "conv_widths": list(CONV_WIDTHS), "global_layer": "relu(2 -> 2)",
                "score": "l2 norm of concat(" + ", ".join(CONCAT_ORDER) + ")"}
    if kind == "mlp":
        return {"input": FIXED_DIM, "hidden": MLP_HIDDEN, "output": 1, "activation": "relu"}
    if kind == "svm":
        return {"input": FIXED_DIM, "loss": "hinge", "lambda": SVM_LAMBDA}
    raise ModelError(f"unknown model kind {kind!r}")


def describe_model(path: str | Path) -> str:
    model = load_model(path)
    manifest = json.loads((Path(path) / "manifest.json").read_text())
    lines = [f"kind: {model.kind}"]
    lines += [f"architecture.{k}: {v}" for k, v in manifest["architecture"].items()]
    lines += [f"normalization.{k}: {v}" for k, v in manifest["normalization"].items()]
    if "feature_scaler" in manifest:
        fs = manifest["feature_scaler"]
        for name, m, s in zip(fs["features"], fs["mean"], fs["std"]):
            lines.append(f"feature.{name}: mean {m:.6g} std {s:.6g}")
    n = sum(int(np.prod(v)) for v in manifest["params"].values())
    lines.append(f"parameters: {n}")
    tr = manifest.get("training", {})
    if "val_accuracy" in tr:
        lines.append(f"validation accuracy: {tr['val_accuracy']:.4f} (epoch {tr['best_epoch']})")
    return "\n".join(lines)


def clone_model(model: Scorer) -> Scorer:
    return copy.deepcopy(model)
