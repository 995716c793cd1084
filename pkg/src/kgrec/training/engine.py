"""Batching, epoch loop and early-stopped fitting."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from kgrec.data import InteractionDataset
from kgrec.models import EmbeddingModel, InitSpec, SparseGrad, init_model
from kgrec.rng import stream
from kgrec.training import losses as L
from kgrec.training.optim import OPTIMIZERS, OptimizerState, init_optimizer, optimizer_step
from kgrec.training.regularizers import REGULARIZERS, regularize
from kgrec.training.sampling import PositiveIndex, corrupt_batch

_log = logging.getLogger(__name__)

COMPATIBLE = {
    "NegSampling": ("MarginHinge", "BCE"),
    "KvsAll": ("BCE",),
    "OneVsAll": ("KL",),
    "RecPairwise": ("BPR", "PH"),
    "RecPointwise": ("BCE", "MSE"),
    "RecSoftmax": ("SCE",),
    "RecContrastive": ("CC",),
}
STRATEGIES = tuple(COMPATIBLE)
LOSSES = ("MarginHinge", "BCE", "KL", "BPR", "PH", "MSE", "SCE", "CC")


def compatible(strategy: str, loss: str) -> bool:
    return loss in COMPATIBLE.get(strategy, ())


@dataclass(frozen=True)
class TrainingConfig:
    """Everything that determines a training run, apart from the model shape.

    ``patience=None`` disables early stopping. ``typed=True`` restricts
    subject candidates and corruptions to users and object ones to items.
    """

    strategy: str = "OneVsAll"
    loss: str = "KL"
    batch_size: int = 1024
    optimizer: str = "Adagrad"
    learning_rate: float = 0.1
    regularizer: str = "None"
    reg_weight: float = 0.0
    lp_p: float = 2.0
    margin: float = 1.0
    negatives: int = 1
    cc_weight: float = 1.0
    cc_margin: float = 0.5
    ph_weight: float = 1.0
    epochs: int = 200
    patience: int | None = 5
    eval_every: int = 5
    seed: int = 0
    typed: bool = True

    def __post_init__(self):
        if self.strategy not in COMPATIBLE:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if not compatible(self.strategy, self.loss):
            raise ValueError(f"loss {self.loss} is incompatible with strategy {self.strategy}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.reg_weight < 0 or self.lp_p < 1 or self.margin < 0:
            raise ValueError("reg_weight and margin must be >= 0, lp_p >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.cc_weight < 0 or self.ph_weight < 0:
            raise ValueError("loss weights must be >= 0")
        if self.epochs < 0 or self.eval_every < 1:
            raise ValueError("epochs must be >= 0 and eval_every >= 1")
        if self.patience is not None and self.patience < 0:
            raise ValueError("patience must be >= 0 or None")

    def to_dict(self) -> dict:
        return asdict(self)


class TrainingData:
    """Index structures over the train split that batching needs."""

    def __init__(self, num_users: int, num_items: int, user_items):
        self.num_users = num_users
        self.num_items = num_items
        self.user_items = [np.asarray(x, dtype=np.int64) for x in user_items]
        users = np.concatenate(
            [np.full(len(x), u, dtype=np.int64) for u, x in enumerate(self.user_items)]
        )
        items = np.concatenate(self.user_items)
        self.triples = np.stack([users, np.zeros_like(users), items + num_users], axis=1)
        item_users = [[] for _ in range(num_items)]
        for u, i in zip(users.tolist(), items.tolist()):
            item_users[i].append(u)
        self.item_users = [np.array(x, dtype=np.int64) for x in item_users]
        self.positives = PositiveIndex(self.user_items, num_items)
        self.active_users = np.array(
            [u for u, x in enumerate(self.user_items) if len(x)], dtype=np.int64
        )
        self.active_items = np.array(
            [i for i, x in enumerate(self.item_users) if len(x)], dtype=np.int64
        )

    @classmethod
    def from_dataset(cls, dataset: InteractionDataset) -> "TrainingData":
        return cls(dataset.num_users, dataset.num_items, dataset.train_pos)

    @property
    def num_entities(self) -> int:
        return self.num_users + self.num_items

    def candidates(self, typed: bool):
        """(subject candidates, object candidates) as entity ids."""
        if typed:
            return np.arange(self.num_users), np.arange(self.num_users, self.num_entities)
        every = np.arange(self.num_entities)
        return every, every

    def units(self, strategy: str) -> np.ndarray:
        if strategy in ("NegSampling", "OneVsAll", "RecPairwise", "RecPointwise"):
            return np.arange(len(self.triples))
        if strategy == "KvsAll":
            return np.concatenate([self.active_users, self.active_items + self.num_users])
        return self.active_users


def _labels(rows: list[np.ndarray], cands: np.ndarray, offset: int) -> np.ndarray:
    """Dense 0/1 matrix marking entity ``offset + rows[b]`` among ``cands``."""
    pos = np.full(cands.max() + 1, -1, dtype=np.int64)
    pos[cands] = np.arange(len(cands))
    out = np.zeros((len(rows), len(cands)))
    for b, r in enumerate(rows):
        out[b, pos[r + offset]] = 1.0
    return out


def make_batch(ctx: TrainingData, config: TrainingConfig, units: np.ndarray, rng) -> dict:
    """Materialize one batch, including every random draw it needs."""
    N, E = ctx.num_users, ctx.num_entities
    s_cands, o_cands = ctx.candidates(config.typed)
    st = config.strategy
    if st in ("NegSampling", "OneVsAll"):
        triples = ctx.triples[units]
        batch = {"triples": triples}
        if st == "NegSampling":
            batch["corruptions"] = corrupt_batch(
                triples, config.negatives, rng, E, N if config.typed else None
            )
        return batch
    if st == "KvsAll":
        users = units[units < N]
        items = units[units >= N]
        return {
            "users": users,
            "user_labels": _labels([ctx.user_items[u] for u in users], o_cands, N),
            "items": items,
            "item_labels": _labels([ctx.item_users[i - N] for i in items], s_cands, 0),
        }
    if st in ("RecPairwise", "RecPointwise"):
        pos = ctx.triples[units][:, [0, 2]]
        neg = ctx.positives.sample_negatives(pos[:, 0], config.negatives, rng) + N
        return {"pos": pos, "neg": neg}
    if st == "RecSoftmax":
        return {
            "users": units,
            "labels": _labels([ctx.user_items[u] for u in units], o_cands, N),
        }
    # RecContrastive: expand each user to all of its positives
    pos = np.concatenate(
        [np.stack([np.full(len(ctx.user_items[u]), u), ctx.user_items[u] + N], axis=1) for u in units]
    )
    neg = ctx.positives.sample_negatives(pos[:, 0], config.negatives, rng) + N
    return {"pos": pos, "neg": neg}


def _touched(model: EmbeddingModel, s, p, o) -> dict:
    """Rows read by a batch: subjects, relations and objects, per block."""
    out: dict[str, np.ndarray] = {}
    for block, ids in ((model.subject_block, s), (model.object_block, o)):
        ids = np.ravel(ids).astype(np.int64)
        out[block] = np.concatenate([out[block], ids]) if block in out else ids
    if model.relation is not None:
        out["relation"] = np.ravel(p).astype(np.int64)
    return out


def batch_objective(model: EmbeddingModel, config: TrainingConfig, ctx: TrainingData, batch: dict):
    """Loss plus regularization of one batch, and its gradient.

    Returns ``(objective, SparseGrad)``. The objective is a deterministic
    function of the model parameters once the batch is fixed, which is what
    the finite-difference checks rely on.
    """
    st, loss_kind = config.strategy, config.loss
    s_cands, o_cands = ctx.candidates(config.typed)
    if st in ("NegSampling", "OneVsAll"):
        t = batch["triples"]
        if st == "OneVsAll":
            touched = _touched(model, t[:, 0], t[:, 1], t[:, 2])
            loss, grads = L.loss_1vsall(model, t, s_cands, o_cands)
        else:
            c = batch["corruptions"].reshape(-1, 3)
            touched = _touched(
                model,
                np.concatenate([t[:, 0], c[:, 0]]),
                np.concatenate([t[:, 1], c[:, 1]]),
                np.concatenate([t[:, 2], c[:, 2]]),
            )
            if loss_kind == "MarginHinge":
                loss, grads = L.loss_margin_ns(model, t, c, config.margin)
            else:
                loss, grads = L.loss_ns_bce(model, t, c)
    elif st == "KvsAll":
        users, items = batch["users"], batch["items"]
        grads = SparseGrad()
        loss = 0.0
        if len(users):
            lo, go = L.loss_kvsall_bce(
                model, users, np.zeros_like(users), batch["user_labels"], "object", o_cands
            )
            loss += lo
            grads.update(go)
        if len(items):
            ls, gs = L.loss_kvsall_bce(
                model, items, np.zeros_like(items), batch["item_labels"], "subject", s_cands
            )
            loss += ls
            grads.update(gs)
        touched = _touched(model, users, [0], items)
    elif st == "RecSoftmax":
        users = batch["users"]
        loss, grads = L.loss_sce(model, users, batch["labels"], o_cands)
        touched = _touched(model, users, [0], [])
    else:
        pos, neg = batch["pos"], batch["neg"]
        u, i = pos[:, 0], pos[:, 1]
        if loss_kind == "BPR":
            uij = np.stack([np.repeat(u, neg.shape[1]), np.repeat(i, neg.shape[1]), neg.ravel()], axis=1)
            loss, grads = L.loss_bpr(model, uij)
        elif loss_kind == "PH":
            neg_pairs = np.stack([np.repeat(u, neg.shape[1]), neg.ravel()], axis=1)
            loss, grads = L.loss_ph(model, pos, neg_pairs, config.margin, config.ph_weight)
        elif loss_kind == "CC":
            loss, grads = L.loss_cc(model, pos, neg, config.cc_margin, config.cc_weight)
        else:
            k = neg.shape[1]
            pairs = np.concatenate([pos, np.stack([np.repeat(u, k), neg.ravel()], axis=1)])
            labels = np.concatenate([np.ones(len(pos)), np.zeros(len(u) * k)])
            loss, grads = L.loss_pointwise(model, pairs, labels, loss_kind)
        touched = _touched(model, u, [0], np.concatenate([i, neg.ravel()]))

    if config.regularizer != "None" and config.reg_weight > 0:
        penalty, rgrads = regularize(model, touched, config.regularizer, config.reg_weight, config.lp_p)
        loss += penalty
        grads.update(rgrads)
    return loss, grads


def train_epoch(
    model: EmbeddingModel,
    ctx: TrainingData,
    config: TrainingConfig,
    state: OptimizerState,
    epoch: int,
) -> float:
    """One pass over shuffled units; returns the summed batch objectives.

    Randomness comes from the ``train`` stream keyed by ``(seed, epoch)``, so
    an epoch is reproducible on its own.
    """
    rng = stream(config.seed, "train", epoch)
    units = ctx.units(config.strategy)
    order = units[rng.permutation(len(units))]
    total = 0.0
    for lo in range(0, len(order), config.batch_size):
        batch = make_batch(ctx, config, order[lo : lo + config.batch_size], rng)
        loss, grads = batch_objective(model, config, ctx, batch)
        if not math.isfinite(loss):
            raise FloatingPointError(f"non-finite loss in epoch {epoch}")
        optimizer_step(model, state, grads, config.learning_rate)
        total += loss
    return total


@dataclass(frozen=True)
class TraceRow:
    epoch: int
    train_loss: float
    valid_recall: float  # NaN on epochs without evaluation
    elapsed_seconds: float

    def tsv(self) -> str:
        return f"{self.epoch}\t{self.train_loss!r}\t{self.valid_recall!r}\t{self.elapsed_seconds:.3f}"


TRACE_HEADER = "epoch\ttrain_loss\tvalid_recall@20\telapsed_seconds"


@dataclass
class FitResult:
    model: EmbeddingModel
    trace: list[TraceRow] = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = float("nan")

    def write_trace(self, path: str | Path) -> None:
        path = Path(path)
        new = not path.exists() or path.stat().st_size == 0
        with open(path, "a", encoding="utf-8") as f:
            if new:
                f.write(TRACE_HEADER + "\n")
            for row in self.trace:
                f.write(row.tsv() + "\n")


def validation_evaluator(dataset: InteractionDataset, k: int = 20) -> Callable[[EmbeddingModel], float]:
    """Recall@k on the validation split, train positives filtered."""
    from kgrec.evaluation import EmbeddingScorer, evaluate

    def run(model: EmbeddingModel) -> float:
        scorer = EmbeddingScorer(model, dataset.num_users)
        return evaluate(scorer, dataset, k=k, filter="train-only").recall_at_k

    return run


def fit(
    model: EmbeddingModel,
    dataset: InteractionDataset,
    config: TrainingConfig,
    evaluator: Callable[[EmbeddingModel], float] | None = None,
) -> FitResult:
    """Train ``model`` in place and return the best validation snapshot.

    Every ``eval_every`` epochs, and after the last one, the evaluator
    (default: validation Recall@20) runs; training stops once ``patience`` consecutive evaluations fail to
    improve on the best. Without validation positives, early stopping must be
    disabled (``patience=None``) and the final parameters are returned.
    """
    has_valid = any(len(v) for v in dataset.valid_pos)
    if evaluator is None:
        if not has_valid:
            if config.patience is not None:
                raise ValueError(
                    "dataset has no validation positives; set patience=None to disable early stopping"
                )
        else:
            evaluator = validation_evaluator(dataset)

    ctx = TrainingData.from_dataset(dataset)
    state = init_optimizer(config.optimizer, model)
    result = FitResult(model=model)
    best_snapshot = None
    bad = 0
    t0 = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        loss = train_epoch(model, ctx, config, state, epoch)
        metric = float("nan")
        stop = False
        due = epoch % config.eval_every == 0 or epoch == config.epochs
        if evaluator is not None and due:
            metric = float(evaluator(model))
            if best_snapshot is None or metric > result.best_metric:
                result.best_metric = metric
                result.best_epoch = epoch
                best_snapshot = model.copy()
                bad = 0
            else:
                bad += 1
            stop = config.patience is not None and bad >= config.patience
        result.trace.append(TraceRow(epoch, loss, metric, time.perf_counter() - t0))
        _log.debug("epoch %d loss %.6g valid %.4f", epoch, loss, metric)
        if stop:
            break
    if best_snapshot is not None:
        result.model = best_snapshot
    else:
        result.best_epoch = len(result.trace)
    return result


def fit_new(
    kind: str,
    dim: int,
    dataset: InteractionDataset,
    config: TrainingConfig,
    evaluator: Callable[[EmbeddingModel], float] | None = None,
) -> FitResult:
    """Initialize a fresh model over the recast graph (seeded by ``config.seed``) and fit it."""
    model = init_model(kind, dim, dataset.num_users + dataset.num_items, 1, InitSpec(seed=config.seed))
    return fit(model, dataset, config, evaluator)
