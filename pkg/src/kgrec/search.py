"""Grid search over training configurations and the embedding-size sweep.

Every (config, validation split) fit is appended to a TSV trial table as soon
as it finishes, so an interrupted search resumes where it stopped. Selection
of the best configuration reads only that table.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from kgrec.data import InteractionDataset, resplit
from kgrec.evaluation import EmbeddingScorer, evaluate
from kgrec.io import atomic_write_text
from kgrec.training import TrainingConfig, compatible, fit_new

_log = logging.getLogger(__name__)


def _unique(values) -> tuple:
    return tuple(dict.fromkeys(values))


@dataclass(frozen=True)
class GridSpec:
    strategies: tuple[str, ...] = ("NegSampling", "KvsAll", "OneVsAll")
    losses: tuple[str, ...] = ("BCE", "KL")
    batch_sizes: tuple[int, ...] = (1024, 2048)
    optimizers: tuple[str, ...] = ("Adam", "Adagrad")
    learning_rates: tuple[float, ...] = (0.0001, 0.001, 0.01, 0.1)
    regularizers: tuple[str, ...] = ("N3", "Lp")
    reg_weights: tuple[float, ...] = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)
    embedding_size: int = 64
    num_validation_splits: int = 3
    valid_fraction: float = 0.1
    epochs: int = 200
    patience: int | None = 5
    eval_every: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("strategies", "losses", "batch_sizes", "optimizers",
                     "learning_rates", "regularizers", "reg_weights"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"grid axis {name} is empty")
        if self.embedding_size < 1 or self.num_validation_splits < 1:
            raise ValueError("embedding_size and num_validation_splits must be >= 1")
        if not 0.0 < self.valid_fraction < 1.0:
            raise ValueError("valid_fraction must be in (0, 1)")

    def axes(self) -> list[tuple]:
        return [
            _unique(self.strategies),
            _unique(self.losses),
            _unique(self.batch_sizes),
            _unique(self.optimizers),
            _unique(self.learning_rates),
            _unique(self.regularizers),
            _unique(self.reg_weights),
        ]

    def size_before_pruning(self) -> int:
        return math.prod(len(a) for a in self.axes())


def enumerate_grid(spec: GridSpec) -> list[TrainingConfig]:
    """Cartesian product of the axes, incompatible strategy/loss pairs removed.

    Order follows the axis order with the last axis varying fastest; the
    position in this list is the configuration id.
    """
    out = []
    for strategy, loss, batch, opt, lr, reg, weight in itertools.product(*spec.axes()):
        if not compatible(strategy, loss):
            continue
        out.append(
            TrainingConfig(
                strategy=strategy,
                loss=loss,
                batch_size=batch,
                optimizer=opt,
                learning_rate=lr,
                regularizer=reg,
                reg_weight=weight,
                epochs=spec.epochs,
                patience=spec.patience,
                eval_every=spec.eval_every,
                seed=spec.seed,
            )
        )
    if not out:
        raise ValueError("no compatible (strategy, loss) pair left in the grid")
    return out


TRIAL_COLUMNS = (
    "config_id", "strategy", "loss", "batch", "optimizer", "lr", "reg",
    "reg_weight", "split", "recall20", "best_epoch", "seconds", "status",
)
TRIAL_HEADER = "\t".join(TRIAL_COLUMNS)


@dataclass(frozen=True)
class TrialRow:
    config_id: int
    strategy: str
    loss: str
    batch: int
    optimizer: str
    lr: float
    reg: str
    reg_weight: float
    split: int
    recall20: float
    best_epoch: int
    seconds: float
    status: str  # "ok" or "failed"

    def tsv(self) -> str:
        return "\t".join([
            str(self.config_id), self.strategy, self.loss, str(self.batch),
            self.optimizer, repr(self.lr), self.reg, repr(self.reg_weight),
            str(self.split), repr(self.recall20), str(self.best_epoch),
            f"{self.seconds:.3f}", self.status,
        ])

    @classmethod
    def parse(cls, line: str) -> "TrialRow":
        f = line.rstrip("\n").split("\t")
        if len(f) != len(TRIAL_COLUMNS):
            raise ValueError(f"trial row has {len(f)} fields, expected {len(TRIAL_COLUMNS)}")
        return cls(int(f[0]), f[1], f[2], int(f[3]), f[4], float(f[5]), f[6],
                   float(f[7]), int(f[8]), float(f[9]), int(f[10]), float(f[11]), f[12])

    def matches(self, config: TrainingConfig) -> bool:
        return (self.strategy, self.loss, self.batch, self.optimizer, self.lr,
                self.reg, self.reg_weight) == (
            config.strategy, config.loss, config.batch_size, config.optimizer,
            config.learning_rate, config.regularizer, config.reg_weight)


def read_trial_table(path: str | Path) -> list[TrialRow]:
    """Completed rows of a trial table; a torn final line (no newline) is ignored."""
    path = Path(path)
    if not path.exists():
        return []
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    complete = lines[:-1]  # the last element is either "" or a torn write
    if not complete:
        return []
    if complete[0] != TRIAL_HEADER:
        raise ValueError(f"{path}: not a trial table (unexpected header)")
    rows = []
    for lineno, line in enumerate(complete[1:], 2):
        if not line:
            continue
        try:
            rows.append(TrialRow.parse(line))
        except ValueError as e:
            raise ValueError(f"{path}:{lineno}: {e}") from None
    return rows


def _repair_table(path: Path) -> None:
    """Drop a torn final line and make sure the header is present."""
    if not path.exists() or path.stat().st_size == 0:
        atomic_write_text(path, TRIAL_HEADER + "\n")
        return
    text = path.read_text(encoding="utf-8")
    if not text.endswith("\n"):
        keep = text[: text.rfind("\n") + 1]
        atomic_write_text(path, keep or TRIAL_HEADER + "\n")


@dataclass(frozen=True)
class TrialResult:
    config_id: int
    config: TrainingConfig
    split_recalls: tuple[float, ...]
    aggregate: float
    best_epoch: int
    seconds: float
    status: str


def aggregate_recalls(values: Sequence[float], how: str = "mean") -> float:
    if how == "mean":
        return sum(values) / len(values)
    if how == "max":
        return max(values)
    raise ValueError(f"aggregate must be 'mean' or 'max', not {how!r}")


def summarize(rows: Sequence[TrialRow], num_splits: int, how: str = "mean") -> dict[int, dict]:
    """Per-config summary of the trial table: recalls by split, time, status."""
    by_config: dict[int, dict[int, TrialRow]] = {}
    for r in rows:
        by_config.setdefault(r.config_id, {})[r.split] = r
    out = {}
    for cid, splits in sorted(by_config.items()):
        present = [splits[s] for s in sorted(splits)]
        done = len(splits) == num_splits and all(s in splits for s in range(num_splits))
        ok = done and all(r.status == "ok" for r in present)
        recalls = tuple(r.recall20 for r in present)
        out[cid] = {
            "recalls": recalls,
            "aggregate": aggregate_recalls(recalls, how) if ok else float("nan"),
            "best_epoch": max((r.best_epoch for r in present), default=0),
            "seconds": sum(r.seconds for r in present),
            "status": "ok" if ok else ("failed" if done else "incomplete"),
        }
    return out


def select_best(rows: Sequence[TrialRow], num_splits: int, how: str = "mean") -> int | None:
    """Config id with the highest aggregate; ties go to lower wall time, then lower id."""
    summary = summarize(rows, num_splits, how)
    ok = [(cid, s) for cid, s in summary.items() if s["status"] == "ok"]
    if not ok:
        return None
    return min(ok, key=lambda t: (-t[1]["aggregate"], t[1]["seconds"], t[0]))[0]


def split_seed(spec: GridSpec, split: int) -> int:
    return spec.seed * 1000 + split


@dataclass
class GridOutcome:
    trials: list[TrialResult]
    best_id: int | None
    best_config: TrainingConfig | None


def run_grid(
    kind: str,
    dataset: InteractionDataset,
    spec: GridSpec,
    table_path: str | Path,
    max_trials: int | None = None,
    max_seconds: float | None = None,
    aggregate: str = "mean",
    configs: Sequence[TrainingConfig] | None = None,
) -> GridOutcome:
    """Fit every configuration on every validation split, appending to ``table_path``.

    ``max_trials`` counts configurations (each with all its splits);
    ``max_seconds`` stops starting new fits once exceeded. Both count only
    work done in this call. Fits already present in the table are skipped.
    A crashing fit is recorded with status ``failed`` and the search goes on.
    """
    if max_trials is not None and max_trials < 1:
        raise ValueError("max_trials must be >= 1")
    if max_seconds is not None and not max_seconds > 0:
        raise ValueError("max_seconds must be > 0")
    configs = list(configs) if configs is not None else enumerate_grid(spec)
    table_path = Path(table_path)
    _repair_table(table_path)
    done = {(r.config_id, r.split): r for r in read_trial_table(table_path)}
    for (cid, _), row in done.items():
        if cid >= len(configs) or not row.matches(configs[cid]):
            raise ValueError(f"{table_path}: config {cid} does not match the current grid")

    splits = [resplit(dataset, spec.valid_fraction, split_seed(spec, s))
              for s in range(spec.num_validation_splits)]
    t_start = time.perf_counter()
    started = 0
    for cid, config in enumerate(configs):
        todo = [s for s in range(spec.num_validation_splits) if (cid, s) not in done]
        if not todo:
            continue
        if max_trials is not None and started >= max_trials:
            break
        if max_seconds is not None and time.perf_counter() - t_start > max_seconds:
            break
        started += 1
        for s in todo:
            t0 = time.perf_counter()
            try:
                res = fit_new(kind, spec.embedding_size, splits[s], config)
                recall, best_epoch, status = res.best_metric, res.best_epoch, "ok"
                if not math.isfinite(recall):
                    status = "failed"
            except Exception as e:  # noqa: BLE001 - a failed trial must not end the search
                _log.warning("config %d split %d failed: %s", cid, s, e)
                recall, best_epoch, status = float("nan"), 0, "failed"
            row = TrialRow(cid, config.strategy, config.loss, config.batch_size,
                           config.optimizer, config.learning_rate, config.regularizer,
                           config.reg_weight, s, recall, best_epoch,
                           time.perf_counter() - t0, status)
            with open(table_path, "a", encoding="utf-8") as f:
                f.write(row.tsv() + "\n")
            done[(cid, s)] = row
            _log.info("config %d split %d recall@20 %.4f (%s)", cid, s, recall, status)

    rows = list(done.values())
    summary = summarize(rows, spec.num_validation_splits, aggregate)
    trials = [
        TrialResult(cid, configs[cid], s["recalls"], s["aggregate"], s["best_epoch"],
                    s["seconds"], s["status"])
        for cid, s in summary.items()
    ]
    best = select_best(rows, spec.num_validation_splits, aggregate)
    return GridOutcome(trials, best, None if best is None else configs[best])


SWEEP_HEADER = "size\trecall20\tstatus"
DEFAULT_SWEEP_SIZES = (128, 256, 512, 1024)


@dataclass(frozen=True)
class SweepPoint:
    size: int
    recall20: float
    status: str


def embedding_sweep(
    kind: str,
    dataset: InteractionDataset,
    config: TrainingConfig,
    sizes: Sequence[int],
    out_path: str | Path | None = None,
    k: int = 20,
) -> list[SweepPoint]:
    """Retrain at each embedding size with the config frozen; test Recall@k per size.

    A size whose fit raises is kept in the output with status ``failed``.
    """
    if not sizes:
        raise ValueError("sizes must be non-empty")
    points = []
    for size in sizes:
        try:
            res = fit_new(kind, int(size), dataset, config)
            report = evaluate(EmbeddingScorer(res.model, dataset.num_users), dataset, k=k)
            points.append(SweepPoint(int(size), report.recall_at_k, "ok"))
        except Exception as e:  # noqa: BLE001 - keep partial results
            _log.warning("size %s failed: %s", size, e)
            points.append(SweepPoint(int(size), float("nan"), "failed"))
        if out_path is not None:
            write_sweep(points, out_path)
    return points


def write_sweep(points: Sequence[SweepPoint], path: str | Path) -> None:
    lines = [SWEEP_HEADER] + [f"{p.size}\t{p.recall20:.6f}\t{p.status}" for p in points]
    atomic_write_text(path, "\n".join(lines) + "\n")
