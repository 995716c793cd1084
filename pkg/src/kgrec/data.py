"""Interaction corpora: loading, id assignment, holdout splits and the triple recast.

Users occupy entity ids ``[0, N)`` and items ``[N, N + M)`` in the recast
graph; there is a single relation (id 0, ``interactsWith``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
import scipy.sparse as sp

from kgrec.rng import stream

_log = logging.getLogger(__name__)

Pair = tuple[int, int]


class DataFormatError(ValueError):
    """A corpus file could not be parsed."""


def load_interactions(
    path: str | Path,
    format: Literal["adjacency", "pairs"] = "adjacency",
    role: Literal["train", "test"] = "train",
) -> list[Pair]:
    """Read raw ``(user, item)`` pairs from a corpus file, in file order.

    Adjacency files hold one line per user: the user id followed by zero or
    more item ids, separated by whitespace. Pairs files hold one
    ``user<TAB>item`` per line. Duplicates are preserved; blank lines are
    skipped.

    Raises
    ------
    DataFormatError
        On a non-integer token (the message names the line) or when the file
        holds no interactions at all.
    OSError
        If the file cannot be read.
    """
    path = Path(path)
    if format not in ("adjacency", "pairs"):
        raise ValueError(f"unknown interaction format {format!r}")
    pairs: list[Pair] = []
    nonblank = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            tokens = line.split()
            if not tokens:
                continue
            nonblank += 1
            try:
                ids = [int(t) for t in tokens]
            except ValueError:
                bad = next(t for t in tokens if not _is_int(t))
                raise DataFormatError(
                    f"{path}:{lineno}: malformed token {bad!r} in {role} file"
                ) from None
            if format == "adjacency":
                user = ids[0]
                pairs.extend((user, item) for item in ids[1:])
            else:
                if len(ids) != 2:
                    raise DataFormatError(
                        f"{path}:{lineno}: expected 'user<TAB>item', got {len(ids)} tokens"
                    )
                pairs.append((ids[0], ids[1]))
    if nonblank == 0:
        raise DataFormatError(f"{path}: empty {role} file")
    return pairs


def _is_int(token: str) -> bool:
    try:
        int(token)
    except ValueError:
        return False
    return True


def _sorted_unique(values: Iterable[int]) -> np.ndarray:
    return np.unique(np.fromiter(values, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class InteractionDataset:
    """Binary user-item interactions split into train, validation and test.

    ``train_pos[u]``, ``valid_pos[u]`` and ``test_pos[u]`` are strictly
    increasing int64 arrays of internal item ids, pairwise disjoint per user.
    """

    num_users: int
    num_items: int
    user_ids: tuple[int, ...]
    item_ids: tuple[int, ...]
    train_pos: tuple[np.ndarray, ...]
    valid_pos: tuple[np.ndarray, ...]
    test_pos: tuple[np.ndarray, ...]
    warnings: tuple[str, ...] = ()
    cold_users: int = 0
    cold_items: int = 0

    def split(self, name: str) -> tuple[np.ndarray, ...]:
        if name == "train":
            return self.train_pos
        if name == "valid":
            return self.valid_pos
        if name == "test":
            return self.test_pos
        raise ValueError(f"unknown split {name!r}")

    def num_interactions(self, *splits: str) -> int:
        splits = splits or ("train", "valid", "test")
        return sum(len(row) for s in splits for row in self.split(s))

    def matrix(self, *splits: str) -> sp.csr_matrix:
        """Binary CSR user-item matrix over the union of ``splits``."""
        splits = splits or ("train",)
        rows, cols = [], []
        for s in splits:
            for u, items in enumerate(self.split(s)):
                rows.append(np.full(len(items), u, dtype=np.int64))
                cols.append(items)
        r = np.concatenate(rows) if rows else np.empty(0, np.int64)
        c = np.concatenate(cols) if cols else np.empty(0, np.int64)
        X = sp.csr_matrix(
            (np.ones(len(r)), (r, c)), shape=(self.num_users, self.num_items)
        )
        X.sum_duplicates()
        X.sort_indices()
        return X

    def check(self) -> None:
        """Assert the structural invariants; raises ``ValueError``."""
        n, m = self.num_users, self.num_items
        for name in ("train", "valid", "test"):
            rows = self.split(name)
            if len(rows) != n:
                raise ValueError(f"{name}: expected {n} user rows, got {len(rows)}")
            for u, items in enumerate(rows):
                if len(items) and (items[0] < 0 or items[-1] >= m):
                    raise ValueError(f"{name}: item id out of range for user {u}")
                if np.any(np.diff(items) <= 0):
                    raise ValueError(f"{name}: user {u} list not strictly increasing")
        for u in range(n):
            a, b, c = self.train_pos[u], self.valid_pos[u], self.test_pos[u]
            if (
                np.intersect1d(a, b).size
                or np.intersect1d(a, c).size
                or np.intersect1d(b, c).size
            ):
                raise ValueError(f"splits overlap for user {u}")


def build_dataset(
    train_pairs: Sequence[Pair],
    test_pairs: Sequence[Pair] = (),
    valid_fraction: float = 0.0,
    seed: int = 0,
) -> InteractionDataset:
    """Assign contiguous ids, collapse duplicates and carve a validation holdout.

    Ids follow first appearance over the train pairs, then the test pairs.
    For each user, ``floor(valid_fraction * n_u)`` train positives move to the
    validation split, drawn without replacement from the ``split`` stream.
    Test users or items never seen in training are kept and counted as cold.
    Test pairs that repeat a train pair are dropped so the splits stay
    disjoint.
    """
    if not train_pairs:
        raise ValueError("train_pairs must be non-empty")
    if not 0.0 <= valid_fraction < 1.0:
        raise ValueError(f"valid_fraction must be in [0, 1), got {valid_fraction}")

    user_index: dict[int, int] = {}
    item_index: dict[int, int] = {}
    for u, i in list(train_pairs) + list(test_pairs):
        user_index.setdefault(u, len(user_index))
        item_index.setdefault(i, len(item_index))
    n, m = len(user_index), len(item_index)

    train_sets: list[set[int]] = [set() for _ in range(n)]
    for u, i in train_pairs:
        train_sets[user_index[u]].add(item_index[i])
    test_sets: list[set[int]] = [set() for _ in range(n)]
    for u, i in test_pairs:
        test_sets[user_index[u]].add(item_index[i])

    notes: list[str] = []
    seen_items = set().union(*train_sets)
    cold_users = 0
    overlap = 0
    for u in range(n):
        if test_sets[u] and not train_sets[u]:
            cold_users += 1
        dup = test_sets[u] & train_sets[u]
        if dup:
            overlap += len(dup)
            test_sets[u] -= dup
    cold_items = m - len(seen_items)
    if cold_users:
        notes.append(f"{cold_users} test user(s) never seen in train; kept")
    if cold_items:
        notes.append(f"{cold_items} item(s) appear only in test; kept")
    if overlap:
        notes.append(f"{overlap} test pair(s) duplicated a train pair; dropped from test")
    for note in notes:
        _log.warning(note)

    rng = stream(seed, "split")
    train_pos, valid_pos = [], []
    for u in range(n):
        items = _sorted_unique(train_sets[u])
        n_valid = int(math.floor(valid_fraction * len(items) + 1e-9))
        if n_valid:
            picked = rng.choice(len(items), size=n_valid, replace=False)
            mask = np.zeros(len(items), dtype=bool)
            mask[picked] = True
            valid_pos.append(items[mask])
            train_pos.append(items[~mask])
        else:
            valid_pos.append(items[:0])
            train_pos.append(items)

    ds = InteractionDataset(
        num_users=n,
        num_items=m,
        user_ids=tuple(user_index),
        item_ids=tuple(item_index),
        train_pos=tuple(train_pos),
        valid_pos=tuple(valid_pos),
        test_pos=tuple(_sorted_unique(s) for s in test_sets),
        warnings=tuple(notes),
        cold_users=cold_users,
        cold_items=cold_items,
    )
    return ds


def resplit(dataset: InteractionDataset, valid_fraction: float, seed: int) -> InteractionDataset:
    """Merge train and validation back together and draw a fresh holdout."""
    if not 0.0 <= valid_fraction < 1.0:
        raise ValueError(f"valid_fraction must be in [0, 1), got {valid_fraction}")
    rng = stream(seed, "split")
    train_pos, valid_pos = [], []
    for u in range(dataset.num_users):
        items = np.union1d(dataset.train_pos[u], dataset.valid_pos[u])
        n_valid = int(math.floor(valid_fraction * len(items) + 1e-9))
        if n_valid:
            picked = rng.choice(len(items), size=n_valid, replace=False)
            mask = np.zeros(len(items), dtype=bool)
            mask[picked] = True
            valid_pos.append(items[mask])
            train_pos.append(items[~mask])
        else:
            valid_pos.append(items[:0])
            train_pos.append(items)
    return InteractionDataset(
        num_users=dataset.num_users,
        num_items=dataset.num_items,
        user_ids=dataset.user_ids,
        item_ids=dataset.item_ids,
        train_pos=tuple(train_pos),
        valid_pos=tuple(valid_pos),
        test_pos=dataset.test_pos,
        warnings=dataset.warnings,
        cold_users=dataset.cold_users,
        cold_items=dataset.cold_items,
    )


@dataclass(frozen=True, eq=False)
class TripleGraph:
    """The recast knowledge graph: ``(user, 0, N + item)`` per train positive."""

    num_users: int
    num_items: int
    triples: np.ndarray  # (T, 3) int64
    num_relations: int = 1

    @property
    def num_entities(self) -> int:
        return self.num_users + self.num_items


def recast_to_triples(dataset: InteractionDataset) -> TripleGraph:
    n = dataset.num_users
    users = np.concatenate(
        [np.full(len(items), u, dtype=np.int64) for u, items in enumerate(dataset.train_pos)]
    ) if n else np.empty(0, np.int64)
    items = np.concatenate(dataset.train_pos) if n else np.empty(0, np.int64)
    triples = np.stack([users, np.zeros_like(users), items.astype(np.int64) + n], axis=1)
    return TripleGraph(num_users=n, num_items=dataset.num_items, triples=triples)


def triples_to_pairs(graph: TripleGraph) -> list[np.ndarray]:
    """Project triples back to per-user sorted item lists (inverse of the recast)."""
    out: list[list[int]] = [[] for _ in range(graph.num_users)]
    for s, _, o in graph.triples:
        out[int(s)].append(int(o) - graph.num_users)
    return [np.array(sorted(items), dtype=np.int64) for items in out]


@dataclass(frozen=True)
class DatasetStats:
    num_users: int
    num_items: int
    num_interactions: int
    sparsity: float
    cold_users: int = 0
    cold_items: int = 0

    def tsv_row(self, name: str) -> str:
        return (
            f"{name}\t{self.num_users}\t{self.num_items}\t"
            f"{self.num_interactions}\t{self.sparsity:.4f}"
        )


def dataset_stats(dataset: InteractionDataset) -> DatasetStats:
    total = dataset.num_interactions("train", "valid", "test")
    cells = dataset.num_users * dataset.num_items
    return DatasetStats(
        num_users=dataset.num_users,
        num_items=dataset.num_items,
        num_interactions=total,
        sparsity=1.0 - total / cells,
        cold_users=dataset.cold_users,
        cold_items=dataset.cold_items,
    )


# prepared-dataset cache: plain text, byte-stable across runs

def save_prepared(dataset: InteractionDataset, directory: str | Path) -> None:
    """Write a built dataset as adjacency files over internal ids plus id maps."""
    from kgrec.io import atomic_write_text

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in ("train", "valid", "test"):
        lines = [
            " ".join([str(u), *map(str, items.tolist())])
            for u, items in enumerate(dataset.split(name))
        ]
        atomic_write_text(d / f"{name}.txt", "".join(line + "\n" for line in lines))
    atomic_write_text(d / "user_ids.txt", "".join(f"{x}\n" for x in dataset.user_ids))
    atomic_write_text(d / "item_ids.txt", "".join(f"{x}\n" for x in dataset.item_ids))


def load_prepared(directory: str | Path) -> InteractionDataset:
    d = Path(directory)
    user_ids = tuple(int(x) for x in (d / "user_ids.txt").read_text().split())
    item_ids = tuple(int(x) for x in (d / "item_ids.txt").read_text().split())
    n = len(user_ids)
    splits = {}
    for name in ("train", "valid", "test"):
        rows = [np.empty(0, np.int64)] * n
        for line in (d / f"{name}.txt").read_text().splitlines():
            ids = [int(t) for t in line.split()]
            if ids:
                rows[ids[0]] = np.array(ids[1:], dtype=np.int64)
        splits[name] = tuple(rows)
    ds = InteractionDataset(
        num_users=n,
        num_items=len(item_ids),
        user_ids=user_ids,
        item_ids=item_ids,
        train_pos=splits["train"],
        valid_pos=splits["valid"],
        test_pos=splits["test"],
    )
    ds.check()
    return ds


def load_corpus(
    directory: str | Path,
    format: Literal["adjacency", "pairs"] = "adjacency",
    valid_fraction: float = 0.0,
    seed: int = 0,
) -> InteractionDataset:
    """Build a dataset from ``train.txt`` and an optional ``test.txt`` in ``directory``."""
    d = Path(directory)
    train = load_interactions(d / "train.txt", format, "train")
    test_path = d / "test.txt"
    test = load_interactions(test_path, format, "test") if test_path.exists() else []
    return build_dataset(train, test, valid_fraction=valid_fraction, seed=seed)
