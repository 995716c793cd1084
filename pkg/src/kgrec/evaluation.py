"""Filtered top-k ranking with Recall@k and nDCG@k.

Validation-time evaluation filters train positives and targets the
validation split; test-time evaluation filters train and validation
positives and targets the test split. Users without target positives are
left out of the means.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from kgrec.data import InteractionDataset
from kgrec.io import atomic_write_text
from kgrec.models import EmbeddingModel, item_scores

# users x items -> scores
Scorer = Callable[[np.ndarray], np.ndarray]

FILTERS = {
    "train-only": (("train",), "valid"),
    "train+valid": (("train", "valid"), "test"),
}


class EmbeddingScorer:
    """Scores every item for a batch of users with an embedding model."""

    def __init__(self, model: EmbeddingModel, num_users: int, relation: int = 0):
        self.model = model
        self.num_users = num_users
        self.relation = relation

    def __call__(self, users) -> np.ndarray:
        return item_scores(self.model, users, self.num_users, self.relation)


def topk_from_scores(scores, k: int, excluded=None) -> np.ndarray:
    """Indices of the ``k`` largest scores, ties broken by ascending index.

    ``excluded`` indices are removed from the candidate pool entirely, so the
    result is shorter than ``k`` only when fewer candidates remain.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    s = np.array(scores, dtype=np.float64, copy=True)
    m = len(s)
    mask = np.ones(m, dtype=bool)
    if excluded is not None and len(excluded):
        mask[np.asarray(excluded, dtype=np.int64)] = False
    n_cand = int(mask.sum())
    kk = min(k, n_cand)
    if kk == 0:
        return np.empty(0, dtype=np.int64)
    s[~mask] = -np.inf
    thr = np.partition(s, m - kk)[m - kk]
    pool = np.flatnonzero((s >= thr) & mask)
    order = np.argsort(-s[pool], kind="stable")
    return pool[order[:kk]]


def _filter_and_target(dataset: InteractionDataset, filter: str, target: str | None):
    try:
        splits, default_target = FILTERS[filter]
    except KeyError:
        raise ValueError(f"filter must be one of {sorted(FILTERS)}, not {filter!r}") from None
    return splits, target or default_target


def _excluded(dataset: InteractionDataset, u: int, splits) -> np.ndarray:
    parts = [dataset.split(s)[u] for s in splits]
    return np.concatenate(parts) if len(parts) > 1 else parts[0]


def rank_topk(scorer: Scorer, dataset: InteractionDataset, u: int, k: int, filter: str = "train+valid"):
    splits, _ = _filter_and_target(dataset, filter, None)
    scores = scorer(np.array([u], dtype=np.int64))[0]
    return topk_from_scores(scores, k, _excluded(dataset, u, splits))


def recall_at_k(topk: Sequence[int], targets: Sequence[int]) -> float:
    targets = np.asarray(targets)
    if len(targets) == 0:
        raise ValueError("recall is undefined for a user without target items")
    hits = np.isin(np.asarray(topk), targets).sum()
    return float(hits) / len(targets)


def ndcg_at_k(topk: Sequence[int], targets: Sequence[int], k: int | None = None) -> float:
    """Binary-relevance nDCG with a ``log2(rank + 1)`` discount."""
    targets = np.asarray(targets)
    if len(targets) == 0:
        raise ValueError("nDCG is undefined for a user without target items")
    k = len(topk) if k is None else k
    hits = np.isin(np.asarray(topk)[:k], targets)
    dcg = sum(1.0 / math.log2(r + 2) for r in np.flatnonzero(hits))
    idcg = sum(1.0 / math.log2(r + 2) for r in range(min(k, len(targets))))
    return dcg / idcg


@dataclass(frozen=True)
class UserResult:
    user: int
    items: tuple[int, ...]
    recall: float
    ndcg: float


@dataclass(frozen=True)
class RankingReport:
    k: int
    per_user: tuple[UserResult, ...]
    recall_at_k: float
    ndcg_at_k: float
    num_evaluated_users: int

    def tsv_row(self, model: str, dataset: str) -> str:
        return (
            f"{model}\t{dataset}\t{self.k}\t{self.recall_at_k:.6f}\t"
            f"{self.ndcg_at_k:.6f}\t{self.num_evaluated_users}"
        )


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("KGREC_THREADS", "1")))
    except ValueError:
        return 1


def evaluate(
    scorer: Scorer,
    dataset: InteractionDataset,
    k: int = 20,
    filter: str = "train+valid",
    target: str | None = None,
    batch_users: int = 256,
    threads: int | None = None,
) -> RankingReport:
    """Rank items for every user with target positives and average the metrics."""
    splits, target = _filter_and_target(dataset, filter, target)
    targets = dataset.split(target)
    users = np.array([u for u in range(dataset.num_users) if len(targets[u])], dtype=np.int64)
    if len(users) == 0:
        raise ValueError(f"no user has {target} positives to evaluate against")

    def run(chunk):
        scores = scorer(chunk)
        out = []
        for row, u in zip(scores, chunk):
            top = topk_from_scores(row, k, _excluded(dataset, int(u), splits))
            out.append(
                UserResult(
                    int(u),
                    tuple(int(x) for x in top),
                    recall_at_k(top, targets[u]),
                    ndcg_at_k(top, targets[u], k),
                )
            )
        return out

    chunks = [users[i : i + batch_users] for i in range(0, len(users), batch_users)]
    threads = threads or _threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    per_user = tuple(r for part in parts for r in part)
    n = len(per_user)
    return RankingReport(
        k=k,
        per_user=per_user,
        recall_at_k=sum(r.recall for r in per_user) / n,
        ndcg_at_k=sum(r.ndcg for r in per_user) / n,
        num_evaluated_users=n,
    )


REPORT_HEADER = "model\tdataset\tk\trecall\tndcg\tusers_evaluated"


def write_report(
    report: RankingReport,
    path: str | Path,
    model: str,
    dataset_name: str,
    per_user_path: str | Path | None = None,
    dataset: InteractionDataset | None = None,
) -> None:
    atomic_write_text(path, REPORT_HEADER + "\n" + report.tsv_row(model, dataset_name) + "\n")
    if per_user_path is not None:
        atomic_write_text(per_user_path, format_per_user(report, dataset))


def format_per_user(report: RankingReport, dataset: InteractionDataset | None = None) -> str:
    """``user<TAB>item item ...`` lines, in raw ids when ``dataset`` is given."""
    lines = []
    for r in report.per_user:
        if dataset is not None:
            uid = dataset.user_ids[r.user]
            items = [dataset.item_ids[i] for i in r.items]
        else:
            uid, items = r.user, list(r.items)
        lines.append(f"{uid}\t{' '.join(map(str, items))}\n")
    return "".join(lines)
