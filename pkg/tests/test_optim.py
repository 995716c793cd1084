import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgrec.models import EmbeddingModel, InitSpec, SparseGrad, init_model
from kgrec.training.optim import NonFiniteGradientError, OptimizerState, init_optimizer, optimizer_step


def scalar_model(value=1.0):
    return EmbeddingModel("MF", 1, 1, np.array([[value], [0.0]]))


def grad(block, rows, values):
    g = SparseGrad()
    g.add(block, np.asarray(rows), np.asarray(values, dtype=np.float64))
    return g


def test_sgd_step_on_a_scalar():
    m = scalar_model()
    optimizer_step(m, init_optimizer("SGD", m), grad("entity", [0], [[2.0]]), 0.1)
    assert m.entity[0, 0] == pytest.approx(1.0 - 0.2, abs=1e-15)


def test_adagrad_first_step_is_lr_times_sign():
    m = scalar_model()
    optimizer_step(m, init_optimizer("Adagrad", m), grad("entity", [0], [[-3.0]]), 0.1)
    assert m.entity[0, 0] == pytest.approx(1.1, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e3, 1e3).filter(lambda x: abs(x) > 1e-3), st.floats(1e-4, 1.0))
def test_adam_first_step_is_lr_times_sign(g, lr):
    m = scalar_model(0.0)
    optimizer_step(m, init_optimizer("Adam", m), grad("entity", [0], [[g]]), lr)
    assert m.entity[0, 0] == pytest.approx(-lr * np.sign(g), rel=1e-4)


@pytest.mark.parametrize("kind", ["SGD", "Adagrad", "Adam"])
def test_untouched_and_zero_gradient_rows_are_bit_identical(kind):
    m = init_model("CP", 3, 5, 1, InitSpec("normal", 1.0, 0))
    before = {k: v.copy() for k, v in m.params().items()}
    state = init_optimizer(kind, m)
    g = SparseGrad()
    g.add("entity", np.array([1, 3]), np.array([[1.0, -1.0, 0.5], [0.0, 0.0, 0.0]]))
    for _ in range(3):
        optimizer_step(m, state, g, 0.1)
    for block, table in m.params().items():
        for r in range(table.shape[0]):
            if block == "entity" and r == 1:
                assert not np.array_equal(table[r], before[block][r])
            else:
                assert np.array_equal(table[r], before[block][r])


def test_lazy_adam_corrects_rows_first_touched_late():
    m = EmbeddingModel("MF", 1, 1, np.zeros((2, 1)))
    state = init_optimizer("Adam", m)
    for _ in range(5):
        optimizer_step(m, state, grad("entity", [0], [[1.0]]), 0.01)
    optimizer_step(m, state, grad("entity", [1], [[4.0]]), 0.01)
    assert m.entity[1, 0] == pytest.approx(-0.01, rel=1e-4)


def test_duplicate_rows_accumulate_before_the_step():
    m = scalar_model()
    optimizer_step(m, init_optimizer("SGD", m), grad("entity", [0, 0], [[1.0], [1.0]]), 0.5)
    assert m.entity[0, 0] == 0.0


def test_non_finite_gradient_names_the_block():
    m = init_model("DistMult", 2, 3, 1)
    before = m.entity.copy()
    g = SparseGrad()
    g.add("entity", np.array([0]), np.array([[1.0, 1.0]]))
    g.add("relation", np.array([0]), np.array([[np.nan, 0.0]]))
    with pytest.raises(NonFiniteGradientError, match="relation"):
        optimizer_step(m, init_optimizer("SGD", m), g, 0.1)
    assert np.array_equal(m.entity, before)


def test_unknown_optimizer():
    with pytest.raises(ValueError):
        OptimizerState("RMSprop")
