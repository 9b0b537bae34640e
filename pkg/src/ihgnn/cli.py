"""``ihgnn`` command line: train, eval, verify, sweep, preprocess.

Exit codes: 0 success, 1 validation error (bad input, config or data), 2 runtime
or solver failure (including failed verification checks).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .data import (CitationDataset, citations_to_hypergraph, dataset_paths, file_sha256,
                   load_citation_dataset, make_splits, synthetic_citations, write_citation_files)
from .equilibrium import SolverError, write_residuals_csv
from .hypergraph import add_self_loops, build_operator, validate_admissible, write_hypergraph
from .linalg import max_row_abs_sum
from .model import forward, load_checkpoint, save_checkpoint
from .train import TrainConfig, TrainingError, accuracy_and_macro_f1, train, write_metrics_csv
from .verify import CHECKS, VerifyContext, run_checks

log = logging.getLogger("ihgnn")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
DATA_ENV = "IHGNN_DATA"
NAMED_DATASETS = ("cora", "citeseer", "pubmed")

# flag dest -> TrainConfig field
_FLAG_TO_FIELD = {
    "lr": "learning_rate", "epochs": "epochs", "kappa": "kappa", "hidden": "hidden_dim",
    "dropout": "dropout", "optimizer": "optimizer", "seed": "seed", "tol": "tol",
    "max_iters": "max_iters", "activation": "activation", "warm_start": "warm_start",
}


class ValidationError(ValueError):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    version: str
    datasets: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    environment: dict = field(default_factory=lambda: {
        "python": platform.python_version(), "numpy": np.__version__})

    def add_artifact(self, path: Path) -> None:
        self.artifacts[path.name] = file_sha256(path)

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


class _Timer:
    def __init__(self, timings: dict, phase: str):
        self.timings, self.phase = timings, phase

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.timings[self.phase] = round(time.perf_counter() - self.t0, 6)


# ---------------------------------------------------------------------------
# config and data


def load_config_file(path: str | None) -> dict:
    """Read ``key = value`` pairs from the ``[train]`` section (or a section-less file)."""
    if not path:
        return {}
    text = Path(path).read_text()
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text if text.lstrip().startswith("[") else "[train]\n" + text)
    except configparser.Error as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if not parser.has_section("train"):
        raise ValidationError(f"{path}: no [train] section")
    return dict(parser.items("train"))


def resolve_config(args) -> TrainConfig:
    """Flags override the config file, which overrides the defaults."""
    merged = load_config_file(getattr(args, "config", None))
    for dest, name in _FLAG_TO_FIELD.items():
        val = getattr(args, dest, None)
        if val is not None:
            merged[name] = val
    try:
        return TrainConfig.from_dict(merged)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"invalid configuration: {exc}") from None


@dataclass
class LoadedData:
    ds: CitationDataset
    op: object
    hashes: dict
    split_strategy: str


def load_data(args) -> LoadedData:
    hashes = {}
    if args.dataset == "synthetic":
        ds = synthetic_citations(n=args.synthetic_nodes, num_classes=args.synthetic_classes,
                                 d=args.synthetic_features, seed=args.data_seed)
        hashes["synthetic"] = (f"n={args.synthetic_nodes},classes={args.synthetic_classes},"
                               f"d={args.synthetic_features},seed={args.data_seed}")
    else:
        if args.content and args.cites:
            content, cites = Path(args.content), Path(args.cites)
        elif args.dataset in NAMED_DATASETS:
            root = args.data_root or os.environ.get(DATA_ENV) or "data"
            content, cites = dataset_paths(root, args.dataset)
        else:
            raise ValidationError("give --dataset cora|citeseer|pubmed|synthetic or --content and --cites")
        for p in (content, cites):
            if not p.is_file():
                raise ValidationError(f"dataset file not found: {p} "
                                      f"(set --data-root or ${DATA_ENV}, or pass --content/--cites)")
        ds = load_citation_dataset(content, cites)
        hashes[content.name] = file_sha256(content)
        hashes[cites.name] = file_sha256(cites)
    g = citations_to_hypergraph(ds)
    if args.add_self_loops:
        g = add_self_loops(g)
    report = validate_admissible(g)
    if not report.admissible:
        raise ValidationError(f"{report.first_violation()} "
                              f"({len(report.isolated_nodes)} isolated node(s); try --add-self-loops)")
    strategy = args.split or ("standard" if args.dataset in NAMED_DATASETS else "stratified")
    return LoadedData(ds, build_operator(g), hashes, strategy)


def splits_for(data: LoadedData, seed: int):
    return make_splits(data.ds.labels, data.split_strategy, seed, num_classes=data.ds.num_classes)


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest("train", asdict(cfg), cfg.seed, __version__)
    with _Timer(man.timings, "load"):
        data = load_data(args)
        splits = splits_for(data, cfg.seed)
    man.datasets = data.hashes
    man.config["split_strategy"] = data.split_strategy
    with _Timer(man.timings, "train"):
        params, history = train(data.op, data.ds.features, data.ds.labels, splits, cfg,
                                data.ds.num_classes)
    with _Timer(man.timings, "evaluate"):
        pred, sol = forward(data.ds.features, data.op, params, cfg.act, cfg.solver)
        yhat = pred.argmax()
        acc, f1 = accuracy_and_macro_f1(data.ds.labels[splits.test], yhat[splits.test])
    ckpt, metrics, resid = out / "checkpoint.npz", out / "metrics.csv", out / "residuals.csv"
    save_checkpoint(ckpt, params, cfg.act, {"manifest": "manifest.json", "seed": cfg.seed})
    write_metrics_csv(history, metrics)
    write_residuals_csv(sol.residuals, resid)
    for p in (ckpt, metrics, resid):
        man.add_artifact(p)
    man.config["result"] = {"test_accuracy": acc, "test_macro_f1": f1,
                            "w_inf_norm": max_row_abs_sum(params.w)}
    man.write(out)
    print(json.dumps({"test_accuracy": acc, "test_macro_f1": f1, "epochs": len(history)}))
    return EXIT_OK


def cmd_eval(args) -> int:
    params, act, extra = load_checkpoint(args.checkpoint)
    data = load_data(args)
    if params.theta1.shape[0] != data.ds.num_features:
        raise ValidationError(f"checkpoint expects {params.theta1.shape[0]} features, "
                              f"dataset has {data.ds.num_features}")
    seed = args.seed if args.seed is not None else int(extra.get("seed", 0))
    splits = splits_for(data, seed)
    cfg = resolve_config(argparse.Namespace(seed=seed, config=None))
    pred, _ = forward(data.ds.features, data.op, params, act, cfg.solver)
    yhat = pred.argmax()
    result = {}
    for name in ("train", "val", "test"):
        idx = getattr(splits, name)
        if idx.size:
            acc, f1 = accuracy_and_macro_f1(data.ds.labels[idx], yhat[idx])
            result[name] = {"accuracy": acc, "macro_f1": f1}
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.K < 0:
        raise ValidationError("--K must be >= 0")
    ctx = VerifyContext(seed=args.seed, K=args.K)
    if args.dataset or args.content:
        ctx.hypergraph = load_data(args).op.hypergraph
    results = run_checks(args.check, ctx)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.seconds:7.3f}s  {r.detail}")
    if args.out:
        Path(args.out).write_text(json.dumps([asdict(r) | {"passed": bool(r.passed)} for r in results],
                                             indent=2) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


SWEEP_COLUMNS = ("hidden_dim", "learning_rate", "dropout", "seed", "best_val_acc",
                 "test_accuracy", "test_macro_f1")


def cmd_sweep(args) -> int:
    if not (args.nhid and args.lrs and args.dropouts and args.seeds):
        raise ValidationError("sweep needs nonempty --nhid, --lr, --dropout and --seeds lists")
    base = resolve_config(argparse.Namespace(**{**vars(args), "lr": None, "hidden": None,
                                                "dropout": None, "seed": None}))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest("sweep", asdict(base), None, __version__)
    man.config["grid"] = {"hidden_dim": args.nhid, "learning_rate": args.lrs,
                          "dropout": args.dropouts, "seeds": args.seeds}
    with _Timer(man.timings, "load"):
        data = load_data(args)
    man.datasets = data.hashes
    cells = [(h, lr, p, s) for h in args.nhid for lr in args.lrs for p in args.dropouts
             for s in args.seeds]

    def run_cell(cell):
        h, lr, p, s = cell
        cfg = TrainConfig(**{**asdict(base), "hidden_dim": h, "learning_rate": lr,
                             "dropout": p, "seed": s})
        splits = splits_for(data, s)
        params, hist = train(data.op, data.ds.features, data.ds.labels, splits, cfg,
                             data.ds.num_classes)
        pred, _ = forward(data.ds.features, data.op, params, cfg.act, cfg.solver)
        acc, f1 = accuracy_and_macro_f1(data.ds.labels[splits.test], pred.argmax()[splits.test])
        best_val = max((r.val_acc for r in hist), default=float("nan"))
        return (h, lr, p, s, best_val, acc, f1)

    with _Timer(man.timings, "train"):
        if args.threads > 1:
            with ThreadPoolExecutor(args.threads) as pool:
                rows = list(pool.map(run_cell, cells))
        else:
            rows = [run_cell(c) for c in cells]

    runs_path, agg_path = out / "sweep_runs.csv", out / "sweep_aggregate.csv"
    with open(runs_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(SWEEP_COLUMNS)
        for r in rows:
            wr.writerow([r[0], repr(r[1]), repr(r[2]), r[3]] + [repr(float(v)) for v in r[4:]])
    with open(agg_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["hidden_dim", "learning_rate", "dropout", "runs", "mean_accuracy",
                     "std_accuracy", "mean_macro_f1", "std_macro_f1"])
        for key in dict.fromkeys(r[:3] for r in rows):
            accs = np.array([r[5] for r in rows if r[:3] == key])
            f1s = np.array([r[6] for r in rows if r[:3] == key])
            sd = (lambda v: float(v.std(ddof=1)) if v.size > 1 else 0.0)
            wr.writerow([key[0], repr(key[1]), repr(key[2]), accs.size, repr(float(accs.mean())),
                         repr(sd(accs)), repr(float(f1s.mean())), repr(sd(f1s))])
    for p in (runs_path, agg_path):
        man.add_artifact(p)
    man.write(out)
    accs = [r[5] for r in rows]
    print(json.dumps({"cells": len(rows), "mean_accuracy": float(np.mean(accs))}))
    return EXIT_OK


def cmd_preprocess(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest("preprocess", {"split": args.split, "add_self_loops": args.add_self_loops},
                      args.seed, __version__)
    with _Timer(man.timings, "load"):
        data = load_data(args)
    man.datasets = data.hashes
    splits = splits_for(data, args.seed)
    hg, split_path = out / "hypergraph.txt", out / "splits.json"
    write_hypergraph(data.op.hypergraph, hg)
    split_path.write_text(json.dumps({k: getattr(splits, k).tolist() for k in ("train", "val", "test")})
                          + "\n")
    arts = [hg, split_path]
    if args.dataset == "synthetic":
        content, cites = out / "synthetic.content", out / "synthetic.cites"
        write_citation_files(data.ds, content, cites)
        arts += [content, cites]
    for p in arts:
        man.add_artifact(p)
    stats = {"nodes": data.op.n, "hyperedges": data.op.hypergraph.num_edges,
             "features": data.ds.num_features, "classes": data.ds.num_classes,
             "dropped_citations": data.ds.dropped_citations,
             "split_sizes": [int(splits.train.size), int(splits.val.size), int(splits.test.size)]}
    man.config["stats"] = stats
    man.write(out)
    print(json.dumps(stats))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _csv_list(typ):
    def parse(text: str):
        try:
            return [typ(t) for t in text.split(",") if t.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated {typ.__name__} values") from None
    return parse


def _add_data_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--dataset", choices=NAMED_DATASETS + ("synthetic",), required=False,
                   default="synthetic" if required else None)
    g.add_argument("--data-root", help=f"directory holding <name>/<name>.content (default ${DATA_ENV} or ./data)")
    g.add_argument("--content", help="explicit .content file (with --cites)")
    g.add_argument("--cites", help="explicit .cites file (with --content)")
    g.add_argument("--add-self-loops", action="store_true",
                   help="give isolated nodes a weight-1 singleton hyperedge")
    g.add_argument("--split", choices=("standard", "stratified"),
                   help="default: standard for named datasets, stratified otherwise")
    g.add_argument("--synthetic-nodes", type=int, default=300)
    g.add_argument("--synthetic-classes", type=int, default=3)
    g.add_argument("--synthetic-features", type=int, default=50)
    g.add_argument("--data-seed", type=int, default=0, help="seed of the synthetic corpus")


def _add_train_args(p: argparse.ArgumentParser, grid: bool = False) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--config", help="key = value file ([train] section optional)")
    if not grid:
        g.add_argument("--lr", type=float)
        g.add_argument("--hidden", type=int)
        g.add_argument("--dropout", type=float)
        g.add_argument("--seed", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--kappa", type=float)
    g.add_argument("--optimizer", choices=("adam", "sgd"))
    g.add_argument("--tol", type=float)
    g.add_argument("--max-iters", type=int)
    g.add_argument("--activation")
    g.add_argument("--no-warm-start", dest="warm_start", action="store_const", const=False)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ihgnn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and write checkpoint, metrics and manifest")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--out", default="runs/train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    _add_data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, help="split seed (default: the checkpoint's training seed)")
    p.add_argument("--out", help="write the scores as JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the numerical guarantee checks")
    _add_data_args(p, required=False)
    p.add_argument("--check", action="append", choices=list(CHECKS),
                   help="repeatable; default runs every check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--K", type=int, default=3, help="polynomial filter order for the expressivity check")
    p.add_argument("--out", help="write results as JSON here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="grid over hidden width, learning rate and dropout")
    _add_data_args(p)
    _add_train_args(p, grid=True)
    p.add_argument("--nhid", type=_csv_list(int), required=True)
    p.add_argument("--lr", dest="lrs", type=_csv_list(float), required=True)
    p.add_argument("--dropout", dest="dropouts", type=_csv_list(float), required=True)
    p.add_argument("--seeds", type=_csv_list(int), required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="runs/sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("preprocess", help="build the hypergraph and splits and write them out")
    _add_data_args(p)
    p.add_argument("--seed", type=int, default=0, help="split seed")
    p.add_argument("--out", default="runs/preprocess")
    p.set_defaults(func=cmd_preprocess)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SolverError, TrainingError) as exc:
        print(f"ihgnn {args.command}: solver failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"ihgnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RuntimeError as exc:
        print(f"ihgnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
