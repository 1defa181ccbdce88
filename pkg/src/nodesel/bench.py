"""Experiment driver: method x family x split grids with 1-shifted geometric means."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .bnb import (
    BnbError,
    HybridSelector,
    Limits,
    OracleComparator,
    PlainSelector,
    ScipLikeSelector,
    SolveStatus,
    estimate_comp,
    solve,
)
from .generators import load_suite
from .milp import MilpInstance
from .simplex import solve_lp
from .models import ModelComparator, ModelError, load_model

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
METHODS = ("SCIP_LIKE_ESTIMATE", "PLAIN_ESTIMATE", "ORACLE", "SVM", "MLP", "GNN")
LEARNED = {"SVM": "svm", "MLP": "mlp", "GNN": "gnn"}
CSV_COLUMNS = ("method", "family", "split", "n_instances", "n_solved",
               "geo_nodes", "geo_std_nodes", "geo_time", "geo_std_time")


class ConfigError(ValueError):
    pass


# -- metrics ---------------------------------------------------------------------

def shifted_geomean(values: Sequence[float], shift: float = 1.0) -> float:
    """``exp(mean(log(v + shift))) - shift``."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("shifted_geomean of an empty sequence")
    if any(v < 0 or math.isnan(v) for v in vals):
        raise ValueError("shifted_geomean needs non-negative values")
    shifted = [v + shift for v in vals]
    prod = math.prod(shifted)
    # the direct root is exact for small products (e.g. [3, 8] -> 5); logs avoid overflow otherwise
    if 1e-300 < prod < 1e300:
        return prod ** (1.0 / len(vals)) - shift
    return math.exp(math.fsum(math.log(s) for s in shifted) / len(vals)) - shift


def geo_std(values: Sequence[float], shift: float = 1.0) -> float:
    """``exp(pstdev(log(v + shift)))``; 1 for constant inputs."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("geo_std of an empty sequence")
    if any(v < 0 or math.isnan(v) for v in vals):
        raise ValueError("geo_std needs non-negative values")
    logs = [math.log(v + shift) for v in vals]
    return math.exp(statistics.pstdev(logs)) if len(logs) > 1 else 1.0


# -- configuration ---------------------------------------------------------------

@dataclass
class SuiteRef:
    path: str
    family: Optional[str] = None
    split: Optional[str] = None


@dataclass
class ExperimentConfig:
    suites: list[SuiteRef]
    methods: list[str]
    checkpoints: dict = field(default_factory=dict)   # method -> path, or method -> {family: path}
    node_limit: Optional[int] = 100_000
    time_limit: Optional[float] = 600.0
    output: str = "results.csv"
    seed: int = 0
    jobs: int = 1
    warm_start: bool = True
    timing: bool = True

    @classmethod
    def from_json(cls, d: dict, base: Optional[Path] = None) -> "ExperimentConfig":
        if d.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise ConfigError(f"config version {d.get('version')} is not {CONFIG_VERSION}")
        known = {"version", "suites", "methods", "checkpoints", "limits", "output", "seed", "jobs",
                 "warm_start", "timing"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

        def resolve(p: str) -> str:
            return str(base / p) if base is not None and not Path(p).is_absolute() else p

        try:
            suites = [SuiteRef(resolve(s["path"]), s.get("family"), s.get("split")) for s in d["suites"]]
            methods = list(d["methods"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"config needs 'suites' (with 'path') and 'methods': {exc}") from exc
        ckpts = {}
        for m, v in d.get("checkpoints", {}).items():
            ckpts[m] = {f: resolve(p) for f, p in v.items()} if isinstance(v, dict) else resolve(v)
        limits = d.get("limits", {})
        cfg = cls(suites, methods, ckpts,
                  node_limit=limits.get("nodes", 100_000), time_limit=limits.get("seconds", 600.0),
                  output=resolve(d.get("output", "results.csv")), seed=int(d.get("seed", 0)),
                  jobs=int(d.get("jobs", 1)), warm_start=bool(d.get("warm_start", True)),
                  timing=bool(d.get("timing", True)))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_json(data, base=path.parent)

    def validate(self) -> None:
        if not self.suites:
            raise ConfigError("config lists no instance suites")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; expected one of {METHODS}")
        for lim, name in ((self.node_limit, "nodes"), (self.time_limit, "seconds")):
            if lim is not None and lim <= 0:
                raise ConfigError(f"limit {name} must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        for m in self.methods:
            if m in LEARNED and m not in self.checkpoints:
                raise ConfigError(f"method {m} needs a checkpoint")

    def checkpoint_for(self, method: str, family: str) -> str:
        ref = self.checkpoints[method]
        if isinstance(ref, dict):
            if family not in ref:
                raise ConfigError(f"method {method} has no checkpoint for family {family}")
            return ref[family]
        return ref


# -- running ---------------------------------------------------------------------

@dataclass
class InstanceResult:
    method: str
    family: str
    split: str
    instance: str
    status: str
    nodes: int
    time: float
    objective: float


@dataclass
class ResultRow:
    method: str
    family: str
    split: str
    n_instances: int
    n_solved: int
    geo_nodes: float
    geo_std_nodes: float
    geo_time: float
    geo_std_time: float


def _family_of(manifest: dict, ref: SuiteRef) -> tuple[str, str]:
    cfg = manifest.get("config", {})
    family = ref.family or cfg.get("family")
    if family is None:
        raise ConfigError(f"suite {ref.path} has no family")
    split = ref.split or ("transfer" if cfg.get("size_class") == "transfer" else "test")
    return family, split


def run_method(method: str, inst: MilpInstance, model_path: Optional[str], limits: Limits,
               warm_start: bool) -> tuple[str, int, float, float]:
    """(status, nodes, seconds, objective) for one solve; the oracle's pre-solve is not timed."""
    if method == "SCIP_LIKE_ESTIMATE":
        comp, sel = estimate_comp, ScipLikeSelector()
    elif method == "PLAIN_ESTIMATE":
        comp, sel = estimate_comp, HybridSelector()
    elif method == "ORACLE":
        pre = solve(inst, estimate_comp, PlainSelector(), limits, warm_start=warm_start)
        if pre.status is not SolveStatus.OPTIMAL:
            return f"presolve_{pre.status.value}", 0, math.nan, math.nan
        comp, sel = OracleComparator(pre.incumbent.values), HybridSelector()
    else:
        comp, sel = ModelComparator(load_model(model_path)), HybridSelector()
    stats = solve(inst, comp, sel, limits, warm_start=warm_start)
    return stats.status.value, stats.nodes_processed, stats.wall_time, stats.objective


def _task(args) -> tuple[str, int, float, float]:
    method, inst, model_path, limits, warm = args
    try:
        return run_method(method, inst, model_path, limits, warm)
    except (BnbError, ModelError) as exc:
        log.error("%s on %s failed: %s", method, inst.name, exc)
        return "error", 0, math.nan, math.nan


def aggregate(results: Sequence[InstanceResult], timing: bool = True) -> list[ResultRow]:
    keys: list[tuple[str, str, str]] = []
    for r in results:
        k = (r.method, r.family, r.split)
        if k not in keys:
            keys.append(k)
    rows = []
    for k in keys:
        group = [r for r in results if (r.method, r.family, r.split) == k]
        solved = [r for r in group if r.status == SolveStatus.OPTIMAL.value]
        nodes = [r.nodes for r in solved]
        times = [r.time for r in solved]
        nan = math.nan
        rows.append(ResultRow(
            *k, len(group), len(solved),
            shifted_geomean(nodes) if nodes else nan, geo_std(nodes) if nodes else nan,
            shifted_geomean(times) if (times and timing) else nan,
            geo_std(times) if (times and timing) else nan,
        ))
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6f}"
    return str(v)


def rows_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def rows_markdown(rows: Sequence[ResultRow], jobs: int = 1) -> str:
    lines = [f"Solver runs used {jobs} parallel job(s).", "",
             "| method | family | split | solved | nodes | time (s) |",
             "|---|---|---|---|---|---|"]
    for r in rows:
        nodes = "-" if math.isnan(r.geo_nodes) else f"{r.geo_nodes:.1f} ± {r.geo_std_nodes:.2f}"
        time = "-" if math.isnan(r.geo_time) else f"{r.geo_time:.3f} ± {r.geo_std_time:.2f}"
        lines.append(f"| {r.method} | {r.family} | {r.split} | {r.n_solved}/{r.n_instances} | {nodes} | {time} |")
    return "\n".join(lines) + "\n"


def instances_csv(results: Sequence[InstanceResult], timing: bool, jobs: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "family", "split", "instance", "status", "nodes", "time", "objective", "jobs"])
    for r in results:
        w.writerow([r.method, r.family, r.split, r.instance, r.status, r.nodes,
                    _fmt(r.time if timing else math.nan), _fmt(r.objective), jobs])
    return buf.getvalue()


@dataclass
class ExperimentOutput:
    rows: list[ResultRow]
    results: list[InstanceResult]
    csv_path: Path

    @property
    def failures(self) -> int:
        return sum(r.status != SolveStatus.OPTIMAL.value for r in self.results)


def run_experiment(cfg: ExperimentConfig) -> ExperimentOutput:
    """Solve every suite with every method and write CSV, markdown and per-instance reports."""
    cfg.validate()
    suites = []
    for ref in cfg.suites:
        instances, manifest = load_suite(ref.path)
        family, split = _family_of(manifest, ref)
        suites.append((family, split, instances))
    # fail on a bad checkpoint before any solve starts
    for m in cfg.methods:
        if m in LEARNED:
            for family, _, _ in suites:
                path = cfg.checkpoint_for(m, family)
                model = load_model(path)
                if model.kind != LEARNED[m]:
                    raise ConfigError(f"checkpoint {path} holds a {model.kind} model, not {LEARNED[m].upper()}")
    limits = Limits(cfg.node_limit, cfg.time_limit)
    # load the compiled LP kernels once so the first timed solve does not pay for it
    for _, _, instances in suites[:1]:
        if instances:
            solve_lp(instances[0])
    tasks, meta = [], []
    for m in cfg.methods:
        for family, split, instances in suites:
            path = cfg.checkpoint_for(m, family) if m in LEARNED else None
            for inst in instances:
                tasks.append((m, inst, path, limits, cfg.warm_start))
                meta.append((m, family, split, inst.name))
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            outcomes = list(pool.map(_task, tasks, chunksize=4))
    else:
        outcomes = [_task(t) for t in tasks]
    results = [InstanceResult(m, f, s, name, *out) for (m, f, s, name), out in zip(meta, outcomes)]
    rows = aggregate(results, cfg.timing)
    out = Path(cfg.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(rows_csv(rows))
    out.with_suffix(".md").write_text(rows_markdown(rows, cfg.jobs))
    out.with_name(out.stem + "_instances.csv").write_text(instances_csv(results, cfg.timing, cfg.jobs))
    return ExperimentOutput(rows, results, out)


def read_rows(path: str | Path) -> list[ResultRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(ResultRow(rec["method"], rec["family"], rec["split"], int(rec["n_instances"]),
                                  int(rec["n_solved"]), *(float(rec[c]) for c in CSV_COLUMNS[5:])))
    return rows
