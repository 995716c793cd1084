"""Non-embedding reference recommenders: MostPop, Random, UserkNN, ItemkNN."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from kgrec.data import InteractionDataset
from kgrec.rng import stream


@dataclass(frozen=True)
class PopularityModel:
    item_counts: np.ndarray

    def __call__(self, users) -> np.ndarray:
        counts = self.item_counts.astype(np.float64)
        return np.broadcast_to(counts, (len(users), len(counts)))


def build_popularity(dataset: InteractionDataset) -> PopularityModel:
    """Per-item interaction counts over the train split."""
    counts = np.zeros(dataset.num_items, dtype=np.int64)
    for items in dataset.train_pos:
        counts[items] += 1
    return PopularityModel(counts)


def random_scores(u: int, num_items: int, seed: int) -> np.ndarray:
    """Uniform ``[0, 1)`` scores, fixed per ``(seed, user)``."""
    return stream(seed, "random", u).random(num_items)


@dataclass(frozen=True)
class RandomModel:
    num_items: int
    seed: int = 0

    def __call__(self, users) -> np.ndarray:
        return np.stack([random_scores(int(u), self.num_items, self.seed) for u in users])


class NeighborhoodModel:
    """Cosine k-nearest-neighbour recommender over binary train vectors.

    In ``item`` mode the score of ``(u, i)`` sums ``sim(i, j)`` over the items
    ``j`` the user interacted with that survive in ``i``'s neighbour list; in
    ``user`` mode it sums ``sim(u, v)`` over ``u``'s neighbours ``v`` that
    interacted with ``i``.

    Attributes
    ----------
    neighbors : list of ndarray
        Per-entity neighbour ids, by descending similarity (ties: ascending id).
    similarities : list of ndarray
        Matching similarity values.
    """

    def __init__(self, mode: str, num_neighbors: int | None, neighbors, similarities, X):
        self.mode = mode
        self.num_neighbors = num_neighbors
        self.similarity = "cosine"
        self.neighbors = neighbors
        self.similarities = similarities
        self._X = X  # users x items, binary CSR
        # contribution lists keyed by the entity that "donates" score:
        # item mode: j -> (i, sim(i, j)) for every i whose list holds j
        # user mode: u -> its own neighbours in ascending id order
        n = len(neighbors)
        if mode == "item":
            owners = np.concatenate(
                [np.full(len(nb), i, dtype=np.int64) for i, nb in enumerate(neighbors)]
            ) if n else np.empty(0, np.int64)
            nbrs = np.concatenate(neighbors) if n else np.empty(0, np.int64)
            sims = np.concatenate(similarities) if n else np.empty(0)
            W = sp.csr_matrix((sims, (nbrs, owners)), shape=(n, n))
            W.sort_indices()
            self._donor = W
        else:
            self._asc = []
            for nb, s in zip(neighbors, similarities):
                order = np.argsort(nb, kind="stable")
                self._asc.append((nb[order], s[order]))

    def user_scores(self, u: int) -> np.ndarray:
        X = self._X
        m = X.shape[1]
        scores = np.zeros(m)
        if self.mode == "item":
            W = self._donor
            hist = X.indices[X.indptr[u] : X.indptr[u + 1]]
            for j in hist:
                lo, hi = W.indptr[j], W.indptr[j + 1]
                np.add.at(scores, W.indices[lo:hi], W.data[lo:hi])
        else:
            nb, sims = self._asc[u]
            for v, s in zip(nb, sims):
                items = X.indices[X.indptr[v] : X.indptr[v + 1]]
                scores[items] += s
        return scores

    def __call__(self, users) -> np.ndarray:
        return np.stack([self.user_scores(int(u)) for u in users])


def _cosine_topk(X: sp.csr_matrix, num_neighbors: int | None, max_dense_bytes: int, chunk: int = 512):
    """Row-wise cosine neighbour lists for the rows of binary ``X``."""
    X = X.tocsr().astype(np.float64)
    n = X.shape[0]
    norms = np.sqrt(np.asarray(X.sum(axis=1)).ravel())  # binary rows: |x|^2 = count
    XT = X.T.tocsc()
    neighbors, sims = [], []
    step = max(1, min(chunk, max_dense_bytes // max(1, 8 * n)))
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        co = (X[lo:hi] @ XT).toarray()  # exact integer co-occurrence counts
        for r in range(hi - lo):
            i = lo + r
            row = co[r]
            row[i] = 0.0
            cand = np.flatnonzero(row > 0)
            if len(cand) == 0 or norms[i] == 0:
                neighbors.append(np.empty(0, np.int64))
                sims.append(np.empty(0))
                continue
            s = row[cand] / (norms[i] * norms[cand])
            order = np.lexsort((cand, -s))
            if num_neighbors is not None:
                order = order[:num_neighbors]
            neighbors.append(cand[order].astype(np.int64))
            sims.append(s[order])
    return neighbors, sims


def build_knn(
    dataset: InteractionDataset,
    mode: str = "item",
    num_neighbors: int | None = 50,
    max_dense_bytes: int = 256 << 20,
) -> NeighborhoodModel:
    """Build the cosine similarity index; ``num_neighbors=None`` keeps every neighbour.

    Similarities are computed a block of rows at a time; ``max_dense_bytes``
    caps the dense block size.
    """
    if mode not in ("item", "user"):
        raise ValueError(f"mode must be 'item' or 'user', not {mode!r}")
    if num_neighbors is not None and num_neighbors < 1:
        raise ValueError("num_neighbors must be >= 1 or None")
    X = dataset.matrix("train")
    rows = X.T.tocsr() if mode == "item" else X
    neighbors, sims = _cosine_topk(rows, num_neighbors, max_dense_bytes)
    return NeighborhoodModel(mode, num_neighbors, neighbors, sims, X)


def knn_score(model: NeighborhoodModel, dataset: InteractionDataset, u: int, i: int) -> float:
    """Score of a single ``(user, item)`` pair."""
    if model.mode == "item":
        nb, s = model.neighbors[i], model.similarities[i]
        hist = dataset.train_pos[u]
        keep = np.isin(nb, hist)
        nb, s = nb[keep], s[keep]
    else:
        nb, s = model.neighbors[u], model.similarities[u]
        keep = np.array([i in set(dataset.train_pos[v].tolist()) for v in nb], dtype=bool)
        nb, s = nb[keep], s[keep]
    total = 0.0
    for v in np.argsort(nb, kind="stable"):
        total += s[v]
    return total
