"""Row-sparse SGD, Adagrad and (lazy) Adam.

Only rows with a nonzero gradient are read or written, so embeddings of
entities absent from a batch stay bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from kgrec.models import EmbeddingModel, SparseGrad

OPTIMIZERS = ("SGD", "Adagrad", "Adam")


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class OptimizerState:
    """Per-block accumulators.

    Adagrad keeps the running sum of squared gradients; Adam keeps first and
    second moments plus a per-row step counter used for bias correction, so a
    row first touched late is corrected as if it were on its first step.
    """

    kind: str
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float | None = None
    accum: dict[str, np.ndarray] = field(default_factory=dict)
    moment1: dict[str, np.ndarray] = field(default_factory=dict)
    moment2: dict[str, np.ndarray] = field(default_factory=dict)
    steps: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.eps is None:
            self.eps = 1e-10 if self.kind == "Adagrad" else 1e-8


def init_optimizer(kind: str, model: EmbeddingModel) -> OptimizerState:
    state = OptimizerState(kind)
    for name, table in model.params().items():
        if kind == "Adagrad":
            state.accum[name] = np.zeros_like(table)
        elif kind == "Adam":
            state.moment1[name] = np.zeros_like(table)
            state.moment2[name] = np.zeros_like(table)
            state.steps[name] = np.zeros(table.shape[0], dtype=np.int64)
    return state


def optimizer_step(
    model: EmbeddingModel,
    state: OptimizerState,
    grads: SparseGrad | dict,
    learning_rate: float,
) -> None:
    """Apply one update in place to ``model`` and ``state``."""
    compact = grads.compact() if isinstance(grads, SparseGrad) else grads
    params = model.params()
    for block, (rows, g) in compact.items():
        if block not in params:
            raise KeyError(f"gradient for unknown parameter block {block!r}")
        if g.shape[1] != params[block].shape[1]:
            raise ValueError(f"gradient width mismatch for block {block!r}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in parameter block {block!r}")

    for block, (rows, g) in compact.items():
        nz = np.any(g != 0, axis=1)
        rows, g = rows[nz], g[nz]
        if len(rows) == 0:
            continue
        table = params[block]
        if state.kind == "SGD":
            table[rows] -= learning_rate * g
        elif state.kind == "Adagrad":
            acc = state.accum[block]
            acc[rows] += g * g
            table[rows] -= learning_rate * g / (np.sqrt(acc[rows]) + state.eps)
        else:
            m, v, t = state.moment1[block], state.moment2[block], state.steps[block]
            t[rows] += 1
            m[rows] = state.beta1 * m[rows] + (1 - state.beta1) * g
            v[rows] = state.beta2 * v[rows] + (1 - state.beta2) * g * g
            tt = t[rows][:, None].astype(np.float64)
            m_hat = m[rows] / (1 - state.beta1**tt)
            v_hat = v[rows] / (1 - state.beta2**tt)
            table[rows] -= learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
