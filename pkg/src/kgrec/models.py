"""Embedding models and their scoring functions.

Every bilinear kind is written as ``score = match(query(s, p), o)`` on the
object side and ``score = match(s, reverse(p, o))`` on the subject side,
where ``match`` is a dot product (TransE: negative Euclidean distance).
Training code only needs the three primitives and their vector-Jacobian
products, so new kinds slot in by adding a branch to each.

ComplEx rows store ``k`` complex components as ``2k`` reals: the real block
followed by the imaginary block.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Literal

import numpy as np

from kgrec.rng import stream

KINDS = ("TransE", "DistMult", "CP", "ComplEx", "MF")
Kind = Literal["TransE", "DistMult", "CP", "ComplEx", "MF"]

# elements per chunk when TransE materializes (rows, candidates, width) differences
_CHUNK_ELEMS = 1 << 22


@dataclass(eq=False)
class EmbeddingModel:
    kind: str
    dim: int
    num_relations: int
    entity: np.ndarray
    relation: np.ndarray | None = None
    entity_obj: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if (self.entity_obj is not None) != (self.kind == "CP"):
            raise ValueError("entity_obj must be present exactly when kind is CP")
        if (self.relation is None) != (self.kind == "MF"):
            raise ValueError("relation table must be absent exactly when kind is MF")
        if self.entity.shape[1] != self.width:
            raise ValueError(f"entity rows have width {self.entity.shape[1]}, expected {self.width}")

    @property
    def width(self) -> int:
        return 2 * self.dim if self.kind == "ComplEx" else self.dim

    @property
    def num_entities(self) -> int:
        return self.entity.shape[0]

    @property
    def subject_block(self) -> str:
        return "entity"

    @property
    def object_block(self) -> str:
        return "entity_obj" if self.kind == "CP" else "entity"

    def params(self) -> dict[str, np.ndarray]:
        out = {"entity": self.entity}
        if self.entity_obj is not None:
            out["entity_obj"] = self.entity_obj
        if self.relation is not None:
            out["relation"] = self.relation
        return out

    def subjects(self, ids) -> np.ndarray:
        return self.entity[ids]

    def objects(self, ids) -> np.ndarray:
        table = self.entity_obj if self.kind == "CP" else self.entity
        return table[ids]

    def relations(self, ids) -> np.ndarray | None:
        if self.relation is None:
            return None
        return self.relation[ids]

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(
            kind=self.kind,
            dim=self.dim,
            num_relations=self.num_relations,
            entity=self.entity.copy(),
            relation=None if self.relation is None else self.relation.copy(),
            entity_obj=None if self.entity_obj is None else self.entity_obj.copy(),
        )


@dataclass(frozen=True)
class InitSpec:
    """Parameter initialization. ``scale=None`` means ``0.1 / sqrt(dim)``."""

    scheme: Literal["uniform", "normal"] = "uniform"
    scale: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in ("uniform", "normal"):
            raise ValueError(f"unknown init scheme {self.scheme!r}")
        if self.scale is not None and not self.scale > 0:
            raise ValueError("init scale must be > 0")


def init_model(
    kind: str,
    dim: int,
    num_entities: int,
    num_relations: int = 1,
    init: InitSpec | None = None,
) -> EmbeddingModel:
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if num_entities < 1 or num_relations < 1:
        raise ValueError("entity and relation counts must be >= 1")
    init = init or InitSpec()
    scale = init.scale if init.scale is not None else 0.1 / np.sqrt(dim)
    rng = stream(init.seed, "init")
    width = 2 * dim if kind == "ComplEx" else dim

    def draw(rows):
        if init.scheme == "uniform":
            return rng.uniform(-scale, scale, size=(rows, width))
        return rng.normal(0.0, scale, size=(rows, width))

    entity = draw(num_entities)
    relation = None if kind == "MF" else draw(num_relations)
    entity_obj = draw(num_entities) if kind == "CP" else None
    return EmbeddingModel(kind, dim, num_relations, entity, relation, entity_obj)


# ---------------------------------------------------------------------------
# per-kind algebra


def _halves(x):
    k = x.shape[-1] // 2
    return x[..., :k], x[..., k:]


def query(kind: str, S, P):
    """Object-side query vector ``q`` with ``score = match(q, o)``."""
    if kind == "TransE":
        return S + P
    if kind in ("DistMult", "CP"):
        return S * P
    if kind == "ComplEx":
        sr, si = _halves(S)
        pr, pi = _halves(P)
        return np.concatenate([sr * pr - si * pi, sr * pi + si * pr], axis=-1)
    return S  # MF


def query_vjp(kind: str, S, P, dQ):
    if kind == "TransE":
        return dQ, dQ
    if kind in ("DistMult", "CP"):
        return dQ * P, dQ * S
    if kind == "ComplEx":
        sr, si = _halves(S)
        pr, pi = _halves(P)
        gr, gi = _halves(dQ)
        dS = np.concatenate([gr * pr + gi * pi, gi * pr - gr * pi], axis=-1)
        dP = np.concatenate([gr * sr + gi * si, gi * sr - gr * si], axis=-1)
        return dS, dP
    return dQ, None


def reverse(kind: str, P, O):
    """Subject-side query vector ``r`` with ``score = match(s, r)``."""
    if kind == "TransE":
        return O - P
    if kind in ("DistMult", "CP"):
        return P * O
    if kind == "ComplEx":
        pr, pi = _halves(P)
        o_r, o_i = _halves(O)
        return np.concatenate([pr * o_r + pi * o_i, pr * o_i - pi * o_r], axis=-1)
    return O


def reverse_vjp(kind: str, P, O, dR):
    if kind == "TransE":
        return -dR, dR
    if kind in ("DistMult", "CP"):
        return dR * O, dR * P
    if kind == "ComplEx":
        pr, pi = _halves(P)
        o_r, o_i = _halves(O)
        gr, gi = _halves(dR)
        dP = np.concatenate([gr * o_r + gi * o_i, gr * o_i - gi * o_r], axis=-1)
        dO = np.concatenate([gr * pr - gi * pi, gr * pi + gi * pr], axis=-1)
        return dP, dO
    return None, dR


def match_pairs(kind: str, A, B):
    """Row-wise match of two ``(n, w)`` arrays."""
    if kind == "TransE":
        return -np.sqrt(((A - B) ** 2).sum(axis=-1))
    return (A * B).sum(axis=-1)


def match_pairs_vjp(kind: str, A, B, g):
    if kind == "TransE":
        D = A - B
        nrm = np.sqrt((D**2).sum(axis=-1))
        coef = np.divide(g, nrm, out=np.zeros_like(nrm), where=nrm > 0)
        dA = -coef[:, None] * D
        return dA, -dA
    return g[:, None] * B, g[:, None] * A


def match_all(kind: str, A, C):
    """All-pairs match: ``(n, w) x (c, w) -> (n, c)``."""
    if kind != "TransE":
        return A @ C.T
    out = np.empty((A.shape[0], C.shape[0]))
    step = max(1, _CHUNK_ELEMS // max(1, C.size))
    for lo in range(0, A.shape[0], step):
        D = A[lo : lo + step, None, :] - C[None, :, :]
        out[lo : lo + step] = -np.sqrt((D**2).sum(axis=-1))
    return out


def match_all_vjp(kind: str, A, C, G):
    if kind != "TransE":
        return G @ C, G.T @ A
    dA = np.zeros_like(A)
    dC = np.zeros_like(C)
    step = max(1, _CHUNK_ELEMS // max(1, C.size))
    for lo in range(0, A.shape[0], step):
        D = A[lo : lo + step, None, :] - C[None, :, :]
        nrm = np.sqrt((D**2).sum(axis=-1))
        W = np.divide(G[lo : lo + step], nrm, out=np.zeros_like(nrm), where=nrm > 0)
        dA[lo : lo + step] = -(W[:, :, None] * D).sum(axis=1)
        dC += (W[:, :, None] * D).sum(axis=0)
    return dA, dC


# ---------------------------------------------------------------------------
# public scoring


def _check_ids(model: EmbeddingModel, s, p, o) -> None:
    E, R = model.num_entities, model.num_relations
    for name, ids, hi in (("subject", s, E), ("relation", p, R), ("object", o, E)):
        arr = np.asarray(ids)
        if arr.size and (arr.min() < 0 or arr.max() >= hi):
            raise IndexError(f"{name} id out of range [0, {hi})")


def score_candidates(model: EmbeddingModel, s: int, p: int, candidates) -> np.ndarray:
    """Scores of ``(s, p, c)`` for each candidate object ``c``."""
    cands = np.asarray(candidates, dtype=np.int64).reshape(-1)
    _check_ids(model, s, p, cands)
    S = model.subjects([s])
    P = model.relations([p])
    Q = query(model.kind, S, P)
    C = model.objects(cands)
    return match_pairs(model.kind, np.broadcast_to(Q, C.shape), C)


def score_triple(model: EmbeddingModel, s: int, p: int, o: int) -> float:
    return float(score_candidates(model, s, p, [o])[0])


def pair_scores(model: EmbeddingModel, s, p, o) -> np.ndarray:
    """Scores of explicit triples given as parallel id arrays."""
    S, P, O = model.subjects(s), model.relations(p), model.objects(o)
    return match_pairs(model.kind, query(model.kind, S, P), O)


def object_scores(model: EmbeddingModel, s, p, cands) -> np.ndarray:
    """``(len(s), len(cands))`` scores over candidate objects."""
    Q = query(model.kind, model.subjects(s), model.relations(p))
    return match_all(model.kind, Q, model.objects(cands))


def subject_scores(model: EmbeddingModel, p, o, cands) -> np.ndarray:
    """``(len(o), len(cands))`` scores over candidate subjects."""
    R = reverse(model.kind, model.relations(p), model.objects(o))
    return match_all(model.kind, R, model.subjects(cands))


def item_scores(model: EmbeddingModel, users, num_users: int, relation: int = 0) -> np.ndarray:
    """Scores of ``users`` against every item entity ``[num_users, E)``."""
    users = np.asarray(users, dtype=np.int64)
    items = np.arange(num_users, model.num_entities)
    return object_scores(model, users, np.full(len(users), relation), items)


# ---------------------------------------------------------------------------
# gradients


class SparseGrad:
    """Row-sparse gradient accumulator keyed by parameter block name."""

    def __init__(self):
        self._rows = defaultdict(list)
        self._vals = defaultdict(list)

    def add(self, block: str, rows, values) -> None:
        if values is None:
            return
        rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        if len(rows) == 0:
            return
        values = np.asarray(values, dtype=np.float64)
        self._rows[block].append(rows)
        self._vals[block].append(values.reshape(len(rows), -1))

    def update(self, other: "SparseGrad") -> None:
        for block in other._rows:
            self._rows[block].extend(other._rows[block])
            self._vals[block].extend(other._vals[block])

    def blocks(self) -> list[str]:
        return sorted(self._rows)

    def compact(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Unique ascending rows and their summed gradient per block."""
        out = {}
        for block in sorted(self._rows):
            rows = np.concatenate(self._rows[block])
            vals = np.concatenate(self._vals[block])
            uniq, inv = np.unique(rows, return_inverse=True)
            acc = np.zeros((len(uniq), vals.shape[1]))
            np.add.at(acc, inv, vals)
            out[block] = (uniq, acc)
        return out

    def dense(self, model: EmbeddingModel) -> dict[str, np.ndarray]:
        out = {name: np.zeros_like(t) for name, t in model.params().items()}
        for block, (rows, vals) in self.compact().items():
            out[block][rows] += vals
        return out


def backward_pairs(model: EmbeddingModel, s, p, o, g, grads: SparseGrad) -> None:
    """Accumulate ``sum_t g_t * d score(s_t, p_t, o_t)`` into ``grads``."""
    kind = model.kind
    S, P, O = model.subjects(s), model.relations(p), model.objects(o)
    Q = query(kind, S, P)
    dQ, dO = match_pairs_vjp(kind, Q, O, np.asarray(g, dtype=np.float64))
    dS, dP = query_vjp(kind, S, P, dQ)
    grads.add(model.subject_block, s, dS)
    grads.add("relation", p, dP)
    grads.add(model.object_block, o, dO)


def backward_objects(model: EmbeddingModel, s, p, cands, G, grads: SparseGrad) -> None:
    kind = model.kind
    S, P = model.subjects(s), model.relations(p)
    Q = query(kind, S, P)
    dQ, dC = match_all_vjp(kind, Q, model.objects(cands), G)
    dS, dP = query_vjp(kind, S, P, dQ)
    grads.add(model.subject_block, s, dS)
    grads.add("relation", p, dP)
    grads.add(model.object_block, cands, dC)


def backward_subjects(model: EmbeddingModel, p, o, cands, G, grads: SparseGrad) -> None:
    kind = model.kind
    P, O = model.relations(p), model.objects(o)
    R = reverse(kind, P, O)
    dR, dC = match_all_vjp(kind, R, model.subjects(cands), G)
    dP, dO = reverse_vjp(kind, P, O, dR)
    grads.add("relation", p, dP)
    grads.add(model.object_block, o, dO)
    grads.add(model.subject_block, cands, dC)
