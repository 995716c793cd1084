"""Embedding penalties applied to the rows a batch touches."""

from __future__ import annotations

import numpy as np

from kgrec.models import EmbeddingModel, SparseGrad

REGULARIZERS = ("None", "L2", "Lp", "N3")


def regularize(
    model: EmbeddingModel,
    touched: dict[str, np.ndarray],
    kind: str,
    weight: float,
    p: float = 2.0,
):
    """Penalty and gradient over the touched rows of each parameter block.

    ``touched`` maps block name to row ids; duplicates are collapsed so each
    row is penalized once per batch.

    * ``L2``: ``weight * sum ||v||_2^2``
    * ``Lp``: ``weight * sum ||v||_p^p``
    * ``N3``: ``weight * sum |v_i|^3``, where for ComplEx ``|v_i|`` is the
      modulus of each complex component.
    """
    if weight < 0:
        raise ValueError("regularization weight must be >= 0")
    if kind not in REGULARIZERS:
        raise ValueError(f"unknown regularizer {kind!r}")
    grads = SparseGrad()
    if kind == "None" or weight == 0:
        return 0.0, grads
    if kind == "Lp" and p < 1:
        raise ValueError("Lp regularizer needs p >= 1")

    params = model.params()
    penalty = 0.0
    for block in sorted(touched):
        if block not in params:
            continue
        rows = np.unique(np.asarray(touched[block], dtype=np.int64))
        V = params[block][rows]
        if kind == "L2":
            penalty += weight * float((V**2).sum())
            G = 2.0 * weight * V
        elif kind == "Lp":
            A = np.abs(V)
            penalty += weight * float((A**p).sum())
            G = weight * p * A ** (p - 1) * np.sign(V)
        elif model.kind == "ComplEx":
            k = V.shape[1] // 2
            mod = np.sqrt(V[:, :k] ** 2 + V[:, k:] ** 2)
            penalty += weight * float((mod**3).sum())
            G = 3.0 * weight * np.concatenate([mod, mod], axis=1) * V
        else:
            A = np.abs(V)
            penalty += weight * float((A**3).sum())
            G = 3.0 * weight * A * V
        grads.add(block, rows, G)
    return penalty, grads
