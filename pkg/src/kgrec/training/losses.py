"""Training objectives.

Each objective comes in two layers. The ``*_from_scores`` functions work on
raw score arrays and return ``(loss, dloss/dscores)``; they carry all the
numerics (stable softplus / log-sum-exp) and are what the hand-computed
examples check. The ``loss_*`` functions score a batch with a model, call
the score-level function and back-propagate into a :class:`SparseGrad`.

All losses are sums over the batch, never means.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from kgrec.models import (
    EmbeddingModel,
    SparseGrad,
    backward_objects,
    backward_pairs,
    backward_subjects,
    object_scores,
    pair_scores,
    query,
    query_vjp,
    subject_scores,
)

# ---------------------------------------------------------------------------
# score level


def logsumexp(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def softmax(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True)


def margin_hinge_from_scores(pos, neg, margin):
    """``sum [margin - pos + neg]_+`` with ``pos`` (n,) and ``neg`` (n, k)."""
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    z = margin - pos[:, None] + neg
    active = (z > 0).astype(np.float64)
    return float(np.sum(z * active)), -active.sum(axis=1), active


def bce_from_scores(scores, labels):
    """Binary cross-entropy on ``sigmoid(scores)``, written with logits."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    loss = np.logaddexp(0.0, scores) - labels * scores
    return float(loss.sum()), expit(scores) - labels


def softmax_xent_from_scores(scores, target):
    """``-score[target] + logsumexp(scores)`` summed over rows of ``scores`` (n, c)."""
    scores = np.asarray(scores, dtype=np.float64)
    rows = np.arange(scores.shape[0])
    loss = logsumexp(scores, axis=1) - scores[rows, target]
    grad = softmax(scores, axis=1)
    grad[rows, target] -= 1.0
    return float(loss.sum()), grad


def sce_from_scores(scores, labels):
    """``-sum_k y_k log softmax(scores)_k`` per row, summed."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    lse = logsumexp(scores, axis=1)
    loss = (labels * (lse[:, None] - scores)).sum()
    grad = labels.sum(axis=1, keepdims=True) * softmax(scores, axis=1) - labels
    return float(loss), grad


def bpr_from_scores(pos, neg):
    """``-sum ln sigmoid(pos - neg)``; returns gradient w.r.t. the difference."""
    d = np.asarray(pos, dtype=np.float64) - np.asarray(neg, dtype=np.float64)
    return float(np.logaddexp(0.0, -d).sum()), -expit(-d)


def mse_from_scores(scores, labels):
    r = np.asarray(labels, dtype=np.float64) - np.asarray(scores, dtype=np.float64)
    return float((r**2).sum()), -2.0 * r


def cc_from_scores(pos, neg, margin, weight):
    """Cosine contrastive loss with ``pos`` (n,) and ``neg`` (n, k) similarities."""
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    k = neg.shape[1] if neg.ndim == 2 else 0
    if k == 0:
        if weight > 0:
            raise ValueError("contrastive loss needs at least one negative when weight > 0")
        return float((1.0 - pos).sum()), -np.ones_like(pos), np.zeros_like(neg)
    z = neg - margin
    active = (z > 0).astype(np.float64)
    loss = (1.0 - pos).sum() + weight / k * (z * active).sum()
    return float(loss), -np.ones_like(pos), weight / k * active


def ph_from_distances(d_pos, d_neg, margin, weight):
    """``sum w [m + d_pos - d_neg]_+`` over aligned squared distances."""
    z = margin + np.asarray(d_pos, dtype=np.float64) - np.asarray(d_neg, dtype=np.float64)
    active = (z > 0).astype(np.float64)
    return float(weight * (z * active).sum()), weight * active


# ---------------------------------------------------------------------------
# model level


def _zeros_like_ids(ids):
    return np.zeros(len(ids), dtype=np.int64)


def loss_margin_ns(model: EmbeddingModel, triples, corruptions, margin: float):
    """Margin ranking loss of each triple against its corruptions.

    ``triples`` is (n, 3); ``corruptions`` is (n, k, 3).
    """
    triples = np.atleast_2d(np.asarray(triples, dtype=np.int64))
    corr = np.asarray(corruptions, dtype=np.int64).reshape(len(triples), -1, 3)
    if corr.shape[1] == 0:
        raise ValueError("need at least one corruption per triple")
    s, p, o = triples.T
    cs, cp, co = corr.reshape(-1, 3).T
    pos = pair_scores(model, s, p, o)
    neg = pair_scores(model, cs, cp, co).reshape(corr.shape[:2])
    loss, dpos, dneg = margin_hinge_from_scores(pos, neg, margin)
    grads = SparseGrad()
    backward_pairs(model, s, p, o, dpos, grads)
    backward_pairs(model, cs, cp, co, dneg.reshape(-1), grads)
    return loss, grads


def loss_ns_bce(model: EmbeddingModel, triples, corruptions):
    """BCE with label 1 for each triple and label 0 for each corruption."""
    triples = np.atleast_2d(np.asarray(triples, dtype=np.int64))
    corr = np.asarray(corruptions, dtype=np.int64).reshape(-1, 3)
    allt = np.concatenate([triples, corr])
    labels = np.concatenate([np.ones(len(triples)), np.zeros(len(corr))])
    s, p, o = allt.T
    loss, g = bce_from_scores(pair_scores(model, s, p, o), labels)
    grads = SparseGrad()
    backward_pairs(model, s, p, o, g, grads)
    return loss, grads


def loss_kvsall_bce(
    model: EmbeddingModel,
    entities,
    relations,
    labels,
    side: str = "object",
    candidates=None,
):
    """Multi-label BCE of one query entity against every candidate.

    With ``side="object"`` the query is ``(e, p, ?)`` and row ``labels[b, c]``
    flags whether ``(e_b, p_b, candidates[c])`` is a training triple; with
    ``side="subject"`` the query is ``(?, p, e)``. Training sums both sides,
    one term per direction of the multi-label objective.
    """
    entities = np.atleast_1d(np.asarray(entities, dtype=np.int64))
    relations = np.atleast_1d(np.asarray(relations, dtype=np.int64))
    labels = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    if candidates is None:
        candidates = np.arange(model.num_entities)
    cands = np.asarray(candidates, dtype=np.int64)
    if labels.shape != (len(entities), len(cands)):
        raise ValueError(f"labels shape {labels.shape} != {(len(entities), len(cands))}")
    grads = SparseGrad()
    if side == "object":
        loss, G = bce_from_scores(object_scores(model, entities, relations, cands), labels)
        backward_objects(model, entities, relations, cands, G, grads)
    elif side == "subject":
        loss, G = bce_from_scores(subject_scores(model, relations, entities, cands), labels)
        backward_subjects(model, relations, entities, cands, G, grads)
    else:
        raise ValueError(f"side must be 'object' or 'subject', not {side!r}")
    return loss, grads


def loss_1vsall(model: EmbeddingModel, triples, subject_candidates=None, object_candidates=None):
    """Softmax cross-entropy over candidate subjects plus over candidate objects.

    The true entity of each triple must be among the candidates. Candidate
    sets default to every entity.
    """
    triples = np.atleast_2d(np.asarray(triples, dtype=np.int64))
    s, p, o = triples.T
    all_e = np.arange(model.num_entities)
    sc = all_e if subject_candidates is None else np.asarray(subject_candidates, np.int64)
    oc = all_e if object_candidates is None else np.asarray(object_candidates, np.int64)
    s_pos = _positions(sc, s)
    o_pos = _positions(oc, o)
    grads = SparseGrad()
    l_o, G_o = softmax_xent_from_scores(object_scores(model, s, p, oc), o_pos)
    backward_objects(model, s, p, oc, G_o, grads)
    l_s, G_s = softmax_xent_from_scores(subject_scores(model, p, o, sc), s_pos)
    backward_subjects(model, p, o, sc, G_s, grads)
    return l_s + l_o, grads


def _positions(cands, ids):
    order = np.argsort(cands, kind="stable")
    idx = np.searchsorted(cands, ids, sorter=order)
    idx = np.minimum(idx, len(cands) - 1)
    pos = order[idx]
    if np.any(cands[pos] != ids):
        raise ValueError("true entity missing from candidate set")
    return pos


def loss_bpr(model: EmbeddingModel, uij):
    """BPR over ``(user, positive item, negative item)`` entity-id rows."""
    uij = np.atleast_2d(np.asarray(uij, dtype=np.int64))
    u, i, j = uij.T
    rel = _zeros_like_ids(u)
    loss, g = bpr_from_scores(pair_scores(model, u, rel, i), pair_scores(model, u, rel, j))
    grads = SparseGrad()
    backward_pairs(model, u, rel, i, g, grads)
    backward_pairs(model, u, rel, j, -g, grads)
    return loss, grads


def loss_ph(model: EmbeddingModel, pos_pairs, neg_pairs, margin: float, weight: float = 1.0):
    """Pairwise hinge on squared embedding distances.

    Sums over every (positive pair, negative pair) combination that shares a
    user. Users are read from the subject table, items from the object table.
    """
    if not margin > 0:
        raise ValueError("pairwise hinge margin must be > 0")
    pos_pairs = np.atleast_2d(np.asarray(pos_pairs, dtype=np.int64))
    neg_pairs = np.atleast_2d(np.asarray(neg_pairs, dtype=np.int64))
    a, b = np.nonzero(pos_pairs[:, 0][:, None] == neg_pairs[:, 0][None, :])
    u = pos_pairs[a, 0]
    i = pos_pairs[a, 1]
    j = neg_pairs[b, 1]
    U, I, J = model.subjects(u), model.objects(i), model.objects(j)
    du, dj = U - I, U - J
    loss, g = ph_from_distances((du**2).sum(1), (dj**2).sum(1), margin, weight)
    grads = SparseGrad()
    g = g[:, None]
    grads.add(model.subject_block, u, 2 * g * (du - dj))
    grads.add(model.object_block, i, -2 * g * du)
    grads.add(model.object_block, j, 2 * g * dj)
    return loss, grads


def loss_pointwise(model: EmbeddingModel, pairs, labels, kind: str = "BCE"):
    """Pointwise BCE (on sigmoid of the score) or squared error on labeled pairs."""
    pairs = np.atleast_2d(np.asarray(pairs, dtype=np.int64))
    u, i = pairs.T
    rel = _zeros_like_ids(u)
    scores = pair_scores(model, u, rel, i)
    if kind == "BCE":
        loss, g = bce_from_scores(scores, labels)
    elif kind == "MSE":
        loss, g = mse_from_scores(scores, labels)
    else:
        raise ValueError(f"pointwise kind must be BCE or MSE, not {kind!r}")
    grads = SparseGrad()
    backward_pairs(model, u, rel, i, g, grads)
    return loss, grads


def loss_sce(model: EmbeddingModel, users, labels, candidates):
    """Softmax cross-entropy of each user over candidate items.

    ``labels`` (n, len(candidates)) marks each user's positives.
    """
    users = np.atleast_1d(np.asarray(users, dtype=np.int64))
    cands = np.asarray(candidates, dtype=np.int64)
    rel = _zeros_like_ids(users)
    loss, G = sce_from_scores(object_scores(model, users, rel, cands), labels)
    grads = SparseGrad()
    backward_objects(model, users, rel, cands, G, grads)
    return loss, grads


def _cosine(A, B):
    na = np.sqrt((A**2).sum(-1))
    nb = np.sqrt((B**2).sum(-1))
    return (A * B).sum(-1) / (na * nb), na, nb


def _cosine_vjp(A, B, c, na, nb, g):
    inv = (g / (na * nb))[..., None]
    dA = inv * B - (g * c / na**2)[..., None] * A
    dB = inv * A - (g * c / nb**2)[..., None] * B
    return dA, dB


def cosine_scores(model: EmbeddingModel, users, items) -> np.ndarray:
    """Cosine between each user's query vector and the item's object vector."""
    rel = _zeros_like_ids(users)
    Q = query(model.kind, model.subjects(users), model.relations(rel))
    return _cosine(Q, model.objects(items))[0]


def loss_cc(model: EmbeddingModel, pos_pairs, negatives, margin: float, weight: float):
    """Cosine contrastive loss.

    ``pos_pairs`` is (n, 2) of (user, item) entity ids and ``negatives`` is
    (n, k) of negative item entity ids sampled for that row's user.
    Similarities are cosines between the user's query vector and the item's
    object-side vector, so for dot-product kinds they are the normalized
    score.
    """
    pos_pairs = np.atleast_2d(np.asarray(pos_pairs, dtype=np.int64))
    negatives = np.asarray(negatives, dtype=np.int64).reshape(len(pos_pairs), -1)
    u, i = pos_pairs.T
    n, k = negatives.shape
    if k == 0 and weight > 0:
        raise ValueError("contrastive loss needs at least one negative when weight > 0")
    kind = model.kind
    rel = _zeros_like_ids(u)
    S, P = model.subjects(u), model.relations(rel)
    Q = query(kind, S, P)
    I = model.objects(i)
    J = model.objects(negatives.reshape(-1)).reshape(n, k, model.width)
    c_pos, qa, ib = _cosine(Q, I)
    c_neg, qa2, jb = _cosine(Q[:, None, :], J)
    loss, g_pos, g_neg = cc_from_scores(c_pos, c_neg, margin, weight)
    dQ1, dI = _cosine_vjp(Q, I, c_pos, qa, ib, g_pos)
    dQ2, dJ = _cosine_vjp(Q[:, None, :], J, c_neg, qa2, jb, g_neg)
    dQ = dQ1 + dQ2.sum(axis=1)
    dS, dP = query_vjp(kind, S, P, dQ)
    grads = SparseGrad()
    grads.add(model.subject_block, u, dS)
    grads.add("relation", rel, dP)
    grads.add(model.object_block, i, dI)
    grads.add(model.object_block, negatives.reshape(-1), dJ.reshape(n * k, model.width))
    return loss, grads
