"""Synthetic corpora and random training instances shared by the tests."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from kgrec.data import InteractionDataset, build_dataset
from kgrec.models import InitSpec, init_model
from kgrec.rng import stream
from kgrec.training import TrainingConfig, TrainingData, make_batch


def block_pairs(num_users=50, num_blocks=5, block_items=6, holdout=0.2, seed=0):
    """Users prefer exactly one block of items; a fraction of each block is held out.

    Returns ``(train_pairs, test_pairs)`` over raw ids.
    """
    rng = stream(seed, "split", 99)
    per_block = num_users // num_blocks
    n_test = int(np.floor(holdout * block_items + 1e-9))
    train, test = [], []
    for u in range(num_users):
        b = u // per_block
        items = list(range(block_items * b, block_items * (b + 1)))
        held = set(rng.choice(block_items, n_test, replace=False).tolist())
        for j, i in enumerate(items):
            (test if j in held else train).append((u, i))
    return train, test


def block_corpus(seed=0, **kw) -> InteractionDataset:
    train, test = block_pairs(seed=seed, **kw)
    return build_dataset(train, test)


def dataset_from_matrix(X, valid=None, test=None) -> InteractionDataset:
    """Dataset whose internal ids are the row/column indices of 0/1 matrices."""
    X = np.asarray(X)
    n, m = X.shape

    def rows(M):
        if M is None:
            return tuple(np.empty(0, np.int64) for _ in range(n))
        return tuple(np.flatnonzero(np.asarray(M)[u]).astype(np.int64) for u in range(n))

    ds = InteractionDataset(
        num_users=n,
        num_items=m,
        user_ids=tuple(range(n)),
        item_ids=tuple(range(m)),
        train_pos=rows(X),
        valid_pos=rows(valid),
        test_pos=rows(test),
    )
    ds.check()
    return ds


def write_adjacency(path: Path, pairs) -> None:
    rows: dict[int, list[int]] = {}
    for u, i in pairs:
        rows.setdefault(u, []).append(i)
    path.write_text("".join(f"{u} {' '.join(map(str, items))}\n" for u, items in rows.items()))


def write_block_corpus(directory: Path, seed=0) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    train, test = block_pairs(seed=seed)
    write_adjacency(directory / "train.txt", train)
    write_adjacency(directory / "test.txt", test)
    return directory


def random_training_instance(rng, kind, strategy, loss, reg):
    """A small random model, interaction set and fixed batch (k <= 8, |E| <= 12)."""
    E = int(rng.integers(4, 13))
    N = int(rng.integers(2, E - 1))
    M = E - N
    dim = int(rng.integers(1, 9))
    user_items = [np.sort(rng.choice(M, int(rng.integers(1, M)), replace=False)) for _ in range(N)]
    ctx = TrainingData(N, M, user_items)
    config = TrainingConfig(
        strategy=strategy,
        loss=loss,
        regularizer=reg,
        reg_weight=float(rng.uniform(0.01, 0.5)) if reg != "None" else 0.0,
        lp_p=float(rng.uniform(1.5, 3.0)) if reg == "Lp" else 2.0,
        margin=float(rng.uniform(0.1, 1.0)),
        cc_margin=float(rng.uniform(0.0, 0.8)),
        negatives=int(rng.integers(1, 4)),
        typed=bool(rng.integers(2)),
    )
    model = init_model(kind, dim, E, 1, InitSpec("normal", 1.0, int(rng.integers(1 << 30))))
    units = ctx.units(strategy)
    take = int(rng.integers(1, min(4, len(units)) + 1))
    units = units[rng.permutation(len(units))[:take]]
    batch = make_batch(ctx, config, units, rng)
    return model, config, ctx, batch
