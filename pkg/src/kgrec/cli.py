"""Command-line entry point: prepare, train, evaluate, recommend, grid, sweep, stats.

Exit status is 0 on success, 1 on a usage or configuration error and 2 on
any other runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from kgrec import baselines
from kgrec.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from kgrec.data import (
    DataFormatError,
    InteractionDataset,
    dataset_stats,
    load_corpus,
    load_prepared,
    save_prepared,
)
from kgrec.evaluation import FILTERS, EmbeddingScorer, evaluate, topk_from_scores, write_report
from kgrec.runconfig import ConfigError, RunConfig, load_config
from kgrec.search import GridSpec, embedding_sweep, enumerate_grid, run_grid
from kgrec.training import fit_new

BASELINES = ("mostpop", "random", "userknn", "itemknn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def load_dataset(path: str | Path, format: str = "adjacency", valid_fraction: float = 0.0,
                 seed: int = 0) -> InteractionDataset:
    """A prepared cache directory (has ``user_ids.txt``) or a raw corpus directory."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"{path}: dataset directory not found")
    if (path / "user_ids.txt").exists():
        return load_prepared(path)
    return load_corpus(path, format, valid_fraction, seed)


def _dataset_from_config(cfg: RunConfig) -> InteractionDataset:
    return load_dataset(cfg["dataset.path"], cfg["dataset.format"],
                        cfg["dataset.valid_fraction"], cfg["seed"])


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x)


def _strs(text: str) -> tuple[str, ...]:
    return tuple(x for x in text.split(",") if x)


# --- subcommands -----------------------------------------------------------

def cmd_prepare(args) -> int:
    ds = load_corpus(args.data, args.format, args.valid_fraction, args.seed)
    save_prepared(ds, args.out)
    for note in ds.warnings:
        print(f"warning: {note}", file=sys.stderr)
    print(dataset_stats(ds).tsv_row(Path(args.data).name))
    return 0


def cmd_stats(args) -> int:
    ds = load_dataset(args.data, args.format)
    name = args.name or Path(args.data).resolve().name
    print(dataset_stats(ds).tsv_row(name))
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, "train")
    config = cfg.training_config()
    ds = _dataset_from_config(cfg)
    result = fit_new(cfg["model.kind"], cfg["model.dim"], ds, config)
    manifest = {
        "model_kind": cfg["model.kind"],
        "dim": cfg["model.dim"],
        "num_users": ds.num_users,
        "num_items": ds.num_items,
        "user_ids": list(ds.user_ids),
        "item_ids": list(ds.item_ids),
        "training_config": config.to_dict(),
        "valid_fraction": cfg["dataset.valid_fraction"],
        "best_epoch": result.best_epoch,
        "valid_recall@20": None if math.isnan(result.best_metric) else result.best_metric,
    }
    save_checkpoint(result.model, manifest, args.out)
    if args.trace:
        result.write_trace(args.trace)
    print(f"saved {args.out} (best epoch {result.best_epoch})")
    return 0


def _scorer(args, ds: InteractionDataset):
    if args.checkpoint:
        model, manifest = load_checkpoint(args.checkpoint)
        if manifest.get("item_ids") is not None and (
            manifest["item_ids"] != list(ds.item_ids) or manifest["user_ids"] != list(ds.user_ids)
        ):
            raise ValueError(f"{args.checkpoint}: id maps do not match the dataset")
        if model.num_entities != ds.num_users + ds.num_items:
            raise ValueError(
                f"{args.checkpoint}: model has {model.num_entities} entities, "
                f"dataset needs {ds.num_users + ds.num_items}"
            )
        return EmbeddingScorer(model, ds.num_users), Path(args.checkpoint).stem
    name = args.baseline
    if name == "mostpop":
        return baselines.build_popularity(ds), "MostPop"
    if name == "random":
        return baselines.RandomModel(ds.num_items, args.seed), "Random"
    mode = "user" if name == "userknn" else "item"
    k = None if args.neighbors == 0 else args.neighbors
    return baselines.build_knn(ds, mode, k), "UserkNN" if mode == "user" else "ItemkNN"


def _eval_dataset(args) -> InteractionDataset:
    if args.config:
        cfg = load_config(args.config, "evaluate")
        return _dataset_from_config(cfg)
    if not args.data:
        raise UsageError("one of --config or --data is required")
    return load_dataset(args.data, args.format, args.valid_fraction, args.seed)


def cmd_evaluate(args) -> int:
    if bool(args.checkpoint) == bool(args.baseline):
        raise UsageError("give exactly one of --checkpoint or --baseline")
    ds = _eval_dataset(args)
    scorer, model_name = _scorer(args, ds)
    report = evaluate(scorer, ds, k=args.k, filter=args.filter)
    dname = Path(args.data or load_config(args.config)["dataset.path"]).resolve().name
    if args.out:
        write_report(report, args.out, model_name, dname, args.per_user, ds)
    print(report.tsv_row(model_name, dname))
    return 0


def cmd_recommend(args) -> int:
    ds = _eval_dataset(args)
    scorer, _ = _scorer(args, ds)
    index = {raw: u for u, raw in enumerate(ds.user_ids)}
    splits, _ = FILTERS[args.filter]
    lines = []
    for raw in args.users:
        if raw not in index:
            raise ValueError(f"unknown user id {raw}")
        u = index[raw]
        scores = scorer(np.array([u], dtype=np.int64))[0]
        excluded = np.concatenate([ds.split(s)[u] for s in splits])
        top = topk_from_scores(scores, args.k, excluded)
        lines.append(f"{raw}\t{' '.join(str(ds.item_ids[i]) for i in top)}")
    print("\n".join(lines))
    return 0


def _grid_spec(args, cfg: RunConfig) -> GridSpec:
    overrides = {}
    for name, conv in (("strategies", _strs), ("losses", _strs), ("batch_sizes", _ints),
                       ("optimizers", _strs), ("learning_rates", _floats),
                       ("regularizers", _strs), ("reg_weights", _floats)):
        value = getattr(args, name)
        if value:
            overrides[name] = conv(value)
    return GridSpec(
        **overrides,
        embedding_size=cfg["model.dim"],
        num_validation_splits=args.splits,
        valid_fraction=cfg["dataset.valid_fraction"] or 0.1,
        epochs=cfg["train.epochs"],
        patience=cfg["train.patience"],
        seed=cfg["seed"],
    )


def cmd_grid(args) -> int:
    cfg = load_config(args.config, "grid")
    spec = _grid_spec(args, cfg)
    if args.dry_run:
        print(f"{spec.size_before_pruning()}\t{len(enumerate_grid(spec))}")
        return 0
    ds = _dataset_from_config(cfg)
    outcome = run_grid(cfg["model.kind"], ds, spec, args.table, args.max_trials,
                       args.max_seconds, args.aggregate)
    if outcome.best_config is None:
        print("no configuration completed successfully", file=sys.stderr)
        return 2
    best = next(t for t in outcome.trials if t.config_id == outcome.best_id)
    c = outcome.best_config
    print(f"best\t{outcome.best_id}\t{c.strategy}\t{c.loss}\t{c.batch_size}\t{c.optimizer}\t"
          f"{c.learning_rate!r}\t{c.regularizer}\t{c.reg_weight!r}\t{best.aggregate:.6f}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, "sweep")
    ds = _dataset_from_config(cfg)
    points = embedding_sweep(cfg["model.kind"], ds, cfg.training_config(), _ints(args.sizes),
                             args.out, k=cfg["eval.k"])
    for p in points:
        print(f"{p.size}\t{p.recall20:.6f}\t{p.status}")
    return 0 if all(p.status == "ok" for p in points) else 2


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kgrec", description="Link-prediction models as top-k recommenders.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(sp, required=True):
        sp.add_argument("--data", required=required, help="corpus or prepared directory")
        sp.add_argument("--format", choices=("adjacency", "pairs"), default="adjacency")

    sp = sub.add_parser("prepare", help="build, split and cache a dataset")
    data_args(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--valid-fraction", type=float, default=0.1)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("stats", help="print a dataset statistics row")
    data_args(sp)
    sp.add_argument("--name", help="dataset name in the output (default: directory name)")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("train", help="fit a model and write a checkpoint")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--trace", help="append the per-epoch trace to this TSV")
    sp.set_defaults(func=cmd_train)

    def scorer_args(sp):
        sp.add_argument("--config")
        data_args(sp, required=False)
        sp.add_argument("--valid-fraction", type=float, default=0.0)
        sp.add_argument("--checkpoint")
        sp.add_argument("--baseline", choices=BASELINES)
        sp.add_argument("--neighbors", type=int, default=50, help="kNN list size; 0 = unlimited")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--k", type=int, default=20)
        sp.add_argument("--filter", choices=tuple(FILTERS), default="train+valid")

    sp = sub.add_parser("evaluate", help="write a ranking report")
    scorer_args(sp)
    sp.add_argument("--out", help="report TSV path")
    sp.add_argument("--per-user", help="per-user top-k list path")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("recommend", help="print top-k items for users (raw ids)")
    scorer_args(sp)
    sp.add_argument("--users", type=int, nargs="+", required=True)
    sp.set_defaults(func=cmd_recommend)

    sp = sub.add_parser("grid", help="run the hyperparameter grid")
    sp.add_argument("--config", required=True)
    sp.add_argument("--table", default="trials.tsv", help="append-only trial table")
    sp.add_argument("--max-trials", type=int)
    sp.add_argument("--max-seconds", type=float)
    sp.add_argument("--aggregate", choices=("mean", "max"), default="mean")
    sp.add_argument("--splits", type=int, default=3)
    sp.add_argument("--dry-run", action="store_true", help="print grid sizes and exit")
    for name in ("strategies", "losses", "batch_sizes", "optimizers",
                 "learning_rates", "regularizers", "reg_weights"):
        sp.add_argument("--" + name.replace("_", "-"), dest=name, help="comma-separated axis values")
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("sweep", help="embedding-size sweep with a frozen config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--sizes", default="128,256,512,1024")
    sp.add_argument("--out", help="sweep TSV path")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"kgrec: error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError, DataFormatError, CheckpointError, RuntimeError,
            FloatingPointError) as e:
        print(f"kgrec: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
