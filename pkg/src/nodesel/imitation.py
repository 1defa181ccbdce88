"""Imitation data collection from a diving oracle, plus the on-disk dataset format.

Collection solves an instance once to get an optimal solution x*, then solves
it again under plain selection with a comparator that asks the oracle about
every comparison. When the oracle has a preference (exactly one node holds x*)
the comparison is recorded with the oracle's label and the engine is handed
the opposite decision, so the tree wanders into states the oracle never
visits. Comparisons where neither node holds x* fall back to best estimate and
are not recorded.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bnb import (
    BnbError,
    BnbNode,
    CompDecision,
    Limits,
    PlainSelector,
    SolveStatus,
    TreeState,
    estimate_comp,
    solve,
)
from .encoding import CONS_DIM, FIXED_DIM, GLOBAL_DIM, VAR_DIM, BipartiteEncoder, NodeBipartiteGraph, encode_fixed
from .milp import MilpInstance
from .models import Scorer, predict_labels

log = logging.getLogger(__name__)

DATASET_VERSION = 1
RECORD_MAGIC = b"NSREC001"
WEIGHT_PARSES = ("grouped", "literal")


def sample_weight(d1: int, d2: int, parse: str = "grouped") -> float:
    """Depth weight of a recorded mistake; shallow mistakes weigh exponentially more.

    ``grouped``: exp((1 + |d1 - d2|) / max(1, min(d1, d2))).
    ``literal``: exp(1 + |d1 - d2|) / max(1, min(d1, d2)).
    """
    if d1 < 0 or d2 < 0:
        raise ValueError("depths must be non-negative")
    denom = max(1, min(d1, d2))
    if parse == "grouped":
        return math.exp((1 + abs(d1 - d2)) / denom)
    if parse == "literal":
        return math.exp(1 + abs(d1 - d2)) / denom
    raise ValueError(f"unknown weight parse {parse!r}; expected one of {WEIGHT_PARSES}")


@dataclass(eq=False)
class Sample:
    instance_id: str
    depth_a: int
    depth_b: int
    ordinal: int
    label: int          # 0 when the first node holds x*
    weight: float
    graph_a: NodeBipartiteGraph
    graph_b: NodeBipartiteGraph
    fixed_a: np.ndarray
    fixed_b: np.ndarray


@dataclass(eq=False)
class SampleDataset:
    samples: list[Sample]
    split: str = "TRAIN"
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    @property
    def instance_ids(self) -> set[str]:
        return {s.instance_id for s in self.samples}

    def label_counts(self) -> tuple[int, int]:
        ones = sum(s.label for s in self.samples)
        return len(self.samples) - ones, ones


# -- collection ------------------------------------------------------------------

class CollectingComparator:
    """Oracle-guided comparator that records preferences and acts against them."""

    def __init__(self, inst: MilpInstance, x_star: np.ndarray, weight_parse: str = "grouped"):
        self.inst = inst
        self.x_star = np.asarray(x_star, dtype=float)
        self.weight_parse = weight_parse
        self.samples: list[Sample] = []
        self.ordinal = 0
        self.tree: Optional[TreeState] = None
        self.encoder = BipartiteEncoder(inst)
        self._graphs: dict[int, NodeBipartiteGraph] = {}

    def bind(self, tree: TreeState) -> None:
        self.tree = tree

    def _graph(self, node: BnbNode) -> NodeBipartiteGraph:
        if node.id not in self._graphs:
            self._graphs[node.id] = self.encoder(node, self.tree.root_bound)
        return self._graphs[node.id]

    def __call__(self, a: BnbNode, b: BnbNode) -> CompDecision:
        self.ordinal += 1
        in_a, in_b = a.contains(self.x_star), b.contains(self.x_star)
        if in_a and in_b:
            raise BnbError(f"optimal solution lies in both node {a.id} and node {b.id}")
        if not (in_a or in_b):
            return estimate_comp(a, b)
        oracle = CompDecision.FIRST_BETTER if in_a else CompDecision.SECOND_BETTER
        self.samples.append(Sample(
            instance_id=self.inst.name,
            depth_a=a.depth,
            depth_b=b.depth,
            ordinal=self.ordinal,
            label=0 if in_a else 1,
            weight=sample_weight(a.depth, b.depth, self.weight_parse),
            graph_a=self._graph(a),
            graph_b=self._graph(b),
            fixed_a=encode_fixed(self.inst, a, self.tree),
            fixed_b=encode_fixed(self.inst, b, self.tree),
        ))
        return oracle.opposite()


@dataclass
class CollectConfig:
    node_limit: Optional[int] = 100_000
    seconds: Optional[float] = None
    limit_factor: int = 4
    weight_parse: str = "grouped"
    warm_start: bool = True
    jobs: int = 1

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class InstanceOutcome:
    instance_id: str
    samples: list[Sample]
    x_star: Optional[list[float]]
    optimum: Optional[float]
    status: str


def collect_instance(inst: MilpInstance, cfg: CollectConfig) -> InstanceOutcome:
    first = solve(inst, estimate_comp, PlainSelector(), Limits(cfg.node_limit, cfg.seconds),
                  warm_start=cfg.warm_start)
    if first.status is not SolveStatus.OPTIMAL:
        log.warning("skipping %s: first solve ended with %s", inst.name, first.status.value)
        return InstanceOutcome(inst.name, [], None, None, f"skipped:{first.status.value}")
    x_star = first.incumbent.values
    comp = CollectingComparator(inst, x_star, cfg.weight_parse)
    limit = None if cfg.node_limit is None else cfg.node_limit * cfg.limit_factor
    second = solve(inst, comp, PlainSelector(), Limits(limit, cfg.seconds), warm_start=cfg.warm_start)
    return InstanceOutcome(inst.name, comp.samples, [float(v) for v in x_star], first.objective,
                           second.status.value)


def _collect_star(args):
    return collect_instance(*args)


def collect(instances: Sequence[MilpInstance], cfg: Optional[CollectConfig] = None,
            split: str = "TRAIN", provenance: Optional[dict] = None) -> SampleDataset:
    """Samples from every instance, merged in instance-id order."""
    cfg = cfg or CollectConfig()
    names = [inst.name for inst in instances]
    if len(set(names)) != len(names):
        raise ValueError("instance names must be unique")
    work = [(inst, cfg) for inst in instances]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            outcomes = list(pool.map(_collect_star, work))
    else:
        outcomes = [_collect_star(w) for w in work]
    outcomes.sort(key=lambda o: o.instance_id)
    samples = [s for o in outcomes for s in o.samples]
    prov = dict(provenance or {})
    prov["collect_config"] = cfg.to_json()
    prov["instances"] = {o.instance_id: {"status": o.status, "samples": len(o.samples), "optimum": o.optimum}
                         for o in outcomes}
    return SampleDataset(samples, split, prov)


def assert_disjoint(train: SampleDataset, test: SampleDataset) -> None:
    shared = train.instance_ids & test.instance_ids
    if shared:
        raise ValueError(f"instances in both splits: {sorted(shared)[:5]}")


def evaluate_accuracy(model: Scorer, ds: SampleDataset) -> float:
    """Unweighted share of samples where the model agrees with the oracle label."""
    if not len(ds):
        raise ValueError("cannot evaluate on an empty dataset")
    labels = np.array([s.label for s in ds.samples])
    return float(np.mean(predict_labels(model, ds.samples) == labels))


# -- storage ---------------------------------------------------------------------

_EDGE = np.dtype([("cons", "<i8"), ("var", "<i8"), ("coef", "<f8")])


def _pack_graph(g: NodeBipartiteGraph) -> bytes:
    edges = np.empty(g.num_edges, dtype=_EDGE)
    edges["cons"], edges["var"], edges["coef"] = g.edge_cons, g.edge_var, g.edge_coef
    return b"".join([
        struct.pack("<3Q", g.num_cons, g.num_vars, g.num_edges),
        np.ascontiguousarray(g.cons_feats, dtype="<f8").tobytes(),
        np.ascontiguousarray(g.var_feats, dtype="<f8").tobytes(),
        edges.tobytes(),
        np.ascontiguousarray(g.global_feats, dtype="<f8").tobytes(),
    ])


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ValueError("dataset record stream is truncated")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, *shape: int) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.take(8 * n), dtype="<f8").reshape(shape).astype(np.float64)

    def graph(self) -> NodeBipartiteGraph:
        m, n, e = self.unpack("<3Q")
        cons = self.floats(m, CONS_DIM)
        var = self.floats(n, VAR_DIM)
        edges = np.frombuffer(self.take(_EDGE.itemsize * e), dtype=_EDGE)
        glob = self.floats(GLOBAL_DIM)
        return NodeBipartiteGraph(cons, var, edges["cons"].astype(np.int64), edges["var"].astype(np.int64),
                                  edges["coef"].astype(np.float64), glob)


def _pack_sample(s: Sample) -> bytes:
    name = s.instance_id.encode()
    return b"".join([
        struct.pack("<I", len(name)), name,
        struct.pack("<4qd", s.depth_a, s.depth_b, s.ordinal, s.label, s.weight),
        _pack_graph(s.graph_a), _pack_graph(s.graph_b),
        np.ascontiguousarray(s.fixed_a, dtype="<f8").tobytes(),
        np.ascontiguousarray(s.fixed_b, dtype="<f8").tobytes(),
    ])


def _read_sample(r: _Reader) -> Sample:
    (ln,) = r.unpack("<I")
    name = r.take(ln).decode()
    da, db, ordinal, label, weight = r.unpack("<4qd")
    ga, gb = r.graph(), r.graph()
    return Sample(name, da, db, ordinal, label, weight, ga, gb, r.floats(FIXED_DIM), r.floats(FIXED_DIM))


def records_bytes(ds: SampleDataset) -> bytes:
    return RECORD_MAGIC + b"".join(_pack_sample(s) for s in ds.samples)


def dataset_hash(ds: SampleDataset) -> str:
    return hashlib.sha256(records_bytes(ds)).hexdigest()


def save_dataset(ds: SampleDataset, path: str | Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blob = records_bytes(ds)
    neg, pos = ds.label_counts()
    manifest = {
        "version": DATASET_VERSION,
        "split": ds.split,
        "counts": {"samples": len(ds), "instances": len(ds.instance_ids), "label_0": neg, "label_1": pos},
        "content_sha256": hashlib.sha256(blob).hexdigest(),
        "bytes": len(blob),
        "provenance": ds.provenance,
    }
    (path / "records.bin").write_bytes(blob)
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_dataset(path: str | Path) -> SampleDataset:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("version") != DATASET_VERSION:
        raise ValueError(f"dataset version {manifest.get('version')} is not {DATASET_VERSION}")
    blob = (path / "records.bin").read_bytes()
    if len(blob) != manifest["bytes"]:
        raise ValueError(f"dataset is truncated: {len(blob)} of {manifest['bytes']} bytes")
    if hashlib.sha256(blob).hexdigest() != manifest["content_sha256"]:
        raise ValueError("dataset content does not match its manifest hash")
    if not blob.startswith(RECORD_MAGIC):
        raise ValueError("dataset record stream has a bad header")
    r = _Reader(blob)
    r.take(len(RECORD_MAGIC))
    samples = []
    while r.pos < len(blob):
        samples.append(_read_sample(r))
    if len(samples) != manifest["counts"]["samples"]:
        raise ValueError("dataset sample count does not match its manifest")
    return SampleDataset(samples, manifest["split"], manifest["provenance"])


def merge(datasets: Sequence[SampleDataset], split: str = "TRAIN") -> SampleDataset:
    samples = [s for ds in datasets for s in ds.samples]
    ids = [ds.instance_ids for ds in datasets]
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            if ids[i] & ids[j]:
                raise ValueError("merged datasets share instances")
    return SampleDataset(samples, split, {"merged": [ds.provenance for ds in datasets]})
