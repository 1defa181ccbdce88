"""Command-line entry point: ``nodesel <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import bench
from .bnb import (
    COMPARATORS,
    SELECTORS,
    BnbError,
    Limits,
    OracleComparator,
    PlainSelector,
    SolveStatus,
    estimate_comp,
    solve,
)
from .generators import DESK_SIZES, GENERATORS, GenConfig, gen_suite, load_suite
from .imitation import WEIGHT_PARSES, CollectConfig, collect, evaluate_accuracy, load_dataset, save_dataset
from .milp import MilpFormatError, read_instance
from .models import TRAINERS, ModelComparator, ModelError, TrainConfig, describe_model, load_model, save_model

EXIT_FAILED = 1
EXIT_USAGE = 2


def _add_limits(p: argparse.ArgumentParser, seconds_default: Optional[float] = None) -> None:
    p.add_argument("--limit-nodes", type=int, default=100_000, help="node limit per solve")
    p.add_argument("--limit-seconds", type=float, default=seconds_default, help="time limit per solve")


def _positive(kind):
    def parse(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return parse


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nodesel", description="Branch and bound with learned node comparators.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a seeded instance suite")
    g.add_argument("--family", choices=sorted(GENERATORS), required=True)
    g.add_argument("--count", type=_positive(int), required=True)
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--size-class", choices=("train_test", "transfer"), default="train_test")
    g.add_argument("--n-min", type=int, help="override the desk-scale lower size")
    g.add_argument("--n-max", type=int, help="override the desk-scale upper size")
    g.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--comparator", choices=sorted(COMPARATORS) + ["oracle", "model"], default="estimate")
    s.add_argument("--model", help="checkpoint directory for --comparator model")
    s.add_argument("--selector", choices=sorted(SELECTORS), default="plain")
    s.add_argument("--trace", help="write a JSON-lines solve trace here")
    s.add_argument("--cold-start", action="store_true", help="solve child LPs from scratch")
    _add_limits(s)

    c = sub.add_parser("collect", help="collect imitation samples from an instance suite")
    c.add_argument("--instances", required=True, help="suite directory")
    c.add_argument("--out", required=True, help="dataset directory")
    c.add_argument("--split", choices=("TRAIN", "TEST"), default="TRAIN")
    c.add_argument("--weight-parse", choices=WEIGHT_PARSES, default="grouped")
    c.add_argument("--jobs", type=_positive(int), default=1)
    c.add_argument("--seed", type=int, default=0, help="recorded in provenance")
    _add_limits(c)

    t = sub.add_parser("train", help="train a scorer on a dataset")
    t.add_argument("--model", choices=sorted(TRAINERS), required=True)
    t.add_argument("--dataset", required=True)
    t.add_argument("--out", required=True, help="checkpoint directory")
    t.add_argument("--epochs", type=_positive(int), default=30)
    t.add_argument("--batch-size", type=_positive(int), default=16)
    t.add_argument("--lr", type=_positive(float), default=1e-3)
    t.add_argument("--seed", type=int, default=0)

    e = sub.add_parser("evaluate", help="run an experiment config, or score a model on a dataset")
    e.add_argument("--config", help="experiment config (JSON)")
    e.add_argument("--model", help="checkpoint directory (with --dataset)")
    e.add_argument("--dataset", help="dataset directory (with --model)")
    e.add_argument("--limit-nodes", type=_positive(int))
    e.add_argument("--limit-seconds", type=_positive(float))
    e.add_argument("--jobs", type=_positive(int))
    e.add_argument("--seed", type=int)

    d = sub.add_parser("model-describe", help="print architecture and normalization of a checkpoint")
    d.add_argument("path")
    return ap


def cmd_generate(args) -> int:
    if args.n_min is not None or args.n_max is not None:
        lo, hi = DESK_SIZES[args.family][args.size_class]
        cfg = GenConfig(args.family, args.n_min if args.n_min is not None else lo,
                        args.n_max if args.n_max is not None else hi, args.count, args.seed, args.size_class)
    else:
        cfg = GenConfig.desk(args.family, args.count, args.seed, args.size_class)
    instances, _ = gen_suite(cfg, args.out)
    print(f"wrote {len(instances)} {args.family} instances to {args.out}")
    return 0


def cmd_solve(args) -> int:
    inst = read_instance(args.instance)
    limits = Limits(args.limit_nodes, args.limit_seconds)
    warm = not args.cold_start
    if args.comparator == "oracle":
        pre = solve(inst, estimate_comp, PlainSelector(), limits, warm_start=warm)
        if pre.status is not SolveStatus.OPTIMAL:
            print(f"status: {pre.status.value} (oracle pre-solve)")
            return EXIT_FAILED
        comp = OracleComparator(pre.incumbent.values)
    elif args.comparator == "model":
        if not args.model:
            raise _Usage("--comparator model needs --model")
        comp = ModelComparator(load_model(args.model))
    else:
        comp = COMPARATORS[args.comparator]
    trace = open(args.trace, "w") if args.trace else None
    try:
        stats = solve(inst, comp, SELECTORS[args.selector](), limits, warm_start=warm, trace=trace)
    finally:
        if trace:
            trace.close()
    print(f"status: {stats.status.value}")
    print(f"objective: {stats.objective:.10g}")
    print(f"nodes: {stats.nodes_processed}")
    print(f"time: {stats.wall_time:.4f}")
    return 0 if stats.status is SolveStatus.OPTIMAL else EXIT_FAILED


def cmd_collect(args) -> int:
    instances, manifest = load_suite(args.instances)
    cfg = CollectConfig(node_limit=args.limit_nodes, seconds=args.limit_seconds,
                        weight_parse=args.weight_parse, jobs=args.jobs)
    ds = collect(instances, cfg, split=args.split,
                 provenance={"suite": manifest.get("config", {}), "seed": args.seed})
    save_dataset(ds, args.out)
    neg, pos = ds.label_counts()
    print(f"collected {len(ds)} samples from {len(ds.instance_ids)} instances (labels 0/1: {neg}/{pos})")
    skipped = [k for k, v in ds.provenance["instances"].items() if v["status"].startswith("skipped")]
    if skipped:
        print(f"skipped {len(skipped)} instances that did not solve within limits")
    return 0


def cmd_train(args) -> int:
    ds = load_dataset(args.dataset)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed)
    model = TRAINERS[args.model](ds.samples, cfg)
    save_model(model, args.out)
    acc = model.training.get("val_accuracy")
    extra = f", validation accuracy {acc:.4f}" if acc is not None else ""
    print(f"trained {args.model} on {len(ds)} samples{extra}; checkpoint in {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    if args.config:
        if args.model or args.dataset:
            raise _Usage("use either --config or --model with --dataset")
        cfg = bench.ExperimentConfig.load(args.config)
        if args.limit_nodes is not None:
            cfg.node_limit = args.limit_nodes
        if args.limit_seconds is not None:
            cfg.time_limit = args.limit_seconds
        if args.jobs is not None:
            cfg.jobs = args.jobs
        if args.seed is not None:
            cfg.seed = args.seed
        out = bench.run_experiment(cfg)
        sys.stdout.write(bench.rows_markdown(out.rows, cfg.jobs))
        print(f"results written to {out.csv_path}")
        if out.failures:
            print(f"{out.failures} solve(s) did not reach optimality", file=sys.stderr)
            return EXIT_FAILED
        return 0
    if not (args.model and args.dataset):
        raise _Usage("evaluate needs --config, or --model with --dataset")
    acc = evaluate_accuracy(load_model(args.model), load_dataset(args.dataset))
    print(f"accuracy: {acc:.4f}")
    return 0


def cmd_model_describe(args) -> int:
    print(describe_model(args.path))
    return 0


class _Usage(Exception):
    pass


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "collect": cmd_collect,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "model-describe": cmd_model_describe,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except _Usage as exc:
        parser.error(str(exc))
    except bench.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, MilpFormatError, ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except BnbError as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
