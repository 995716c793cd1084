import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from kgrec.models import (
    KINDS,
    EmbeddingModel,
    InitSpec,
    init_model,
    item_scores,
    object_scores,
    pair_scores,
    score_candidates,
    score_triple,
    subject_scores,
)


def distmult_example():
    entity = np.array([[1.0, 2.0], [3.0, 1.0], [0.0, 0.0]])
    return EmbeddingModel("DistMult", 2, 1, entity, relation=np.array([[1.0, 1.0]]))


def test_distmult_hand_score():
    assert score_triple(distmult_example(), 0, 0, 1) == 5.0


def test_complex_with_zero_imaginary_matches_distmult():
    real = distmult_example()
    entity = np.concatenate([real.entity, np.zeros_like(real.entity)], axis=1)
    relation = np.concatenate([real.relation, np.zeros_like(real.relation)], axis=1)
    m = EmbeddingModel("ComplEx", 2, 1, entity, relation=relation)
    assert score_triple(m, 0, 0, 1) == 5.0


def test_transe_zero_vectors_score_zero():
    m = EmbeddingModel("TransE", 3, 1, np.zeros((2, 3)), relation=np.zeros((1, 3)))
    assert score_triple(m, 0, 0, 1) == 0.0


def test_candidates_against_hand_values():
    m = distmult_example()
    assert score_candidates(m, 0, 0, [1, 2]).tolist() == [5.0, 0.0]
    assert score_candidates(m, 0, 0, [1])[0] == score_triple(m, 0, 0, 1)


def test_mf_ignores_relation_and_cp_uses_object_table():
    mf = EmbeddingModel("MF", 2, 1, np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert score_triple(mf, 0, 0, 1) == 11.0
    cp = EmbeddingModel(
        "CP", 1, 1, np.array([[2.0], [5.0]]), relation=np.array([[3.0]]), entity_obj=np.array([[7.0], [11.0]])
    )
    assert score_triple(cp, 0, 0, 1) == 2 * 3 * 11
    assert score_triple(cp, 1, 0, 0) == 5 * 3 * 7


@pytest.mark.parametrize("kind", KINDS)
def test_batched_scoring_matches_oracle(kind, rng):
    m = init_model(kind, 3, 7, 2, InitSpec("normal", 1.0, 5))
    params = {k: v[None] for k, v in m.params().items()}
    s = rng.integers(0, 7, 20)
    p = rng.integers(0, 2, 20)
    o = rng.integers(0, 7, 20)
    np.testing.assert_allclose(pair_scores(m, s, p, o), oracles.score(kind, params, s, p, o)[0], rtol=1e-12, atol=1e-12)
    cands = np.arange(7)
    want = oracles.score(kind, params, s[:, None], p[:, None], cands[None, :])[0]
    np.testing.assert_allclose(object_scores(m, s, p, cands), want, rtol=1e-12, atol=1e-12)
    want = oracles.score(kind, params, cands[None, :], p[:, None], o[:, None])[0]
    np.testing.assert_allclose(subject_scores(m, p, o, cands), want, rtol=1e-12, atol=1e-12)
    loop = [score_triple(m, int(s[0]), int(p[0]), c) for c in range(7)]
    np.testing.assert_allclose(score_candidates(m, int(s[0]), int(p[0]), cands), loop, rtol=1e-12, atol=1e-12)


def test_item_scores_cover_item_range():
    m = init_model("DistMult", 4, 5, 1, InitSpec(seed=1))
    out = item_scores(m, [0, 1], num_users=2)
    assert out.shape == (2, 3)
    assert out[1, 2] == pytest.approx(score_triple(m, 1, 0, 4), abs=1e-15)


def test_init_is_deterministic_per_seed():
    a = init_model("DistMult", 4, 6, 1, InitSpec(seed=7))
    b = init_model("DistMult", 4, 6, 1, InitSpec(seed=7))
    c = init_model("DistMult", 4, 6, 1, InitSpec(seed=8))
    assert np.array_equal(a.entity, b.entity) and np.array_equal(a.relation, b.relation)
    assert not np.array_equal(a.entity, c.entity)


def test_init_shapes_per_kind():
    cp = init_model("CP", 4, 6, 1)
    assert cp.entity_obj is not None and cp.entity_obj.shape == (6, 4)
    cx = init_model("ComplEx", 4, 6, 1)
    assert cx.entity.shape == (6, 8) and cx.relation.shape == (1, 8)
    mf = init_model("MF", 4, 6, 1)
    assert mf.relation is None
    default = init_model("DistMult", 16, 3, 1)
    assert np.abs(default.entity).max() <= 0.1 / 4


def test_init_rejects_degenerate_sizes():
    with pytest.raises(ValueError):
        init_model("DistMult", 0, 6, 1)
    with pytest.raises(ValueError):
        init_model("DistMult", 4, 0, 1)
    with pytest.raises(ValueError):
        init_model("RESCAL", 4, 6, 1)


def test_out_of_range_ids():
    m = distmult_example()
    with pytest.raises(IndexError):
        score_triple(m, 3, 0, 0)
    with pytest.raises(IndexError):
        score_triple(m, 0, 1, 0)
    with pytest.raises(IndexError):
        score_candidates(m, 0, 0, [0, -1])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(2, 8), st.integers(0, 10_000))
def test_transe_scores_are_never_positive(dim, E, seed):
    m = init_model("TransE", dim, E, 1, InitSpec("normal", 1.0, seed))
    assert np.all(object_scores(m, np.arange(E), np.zeros(E, int), np.arange(E)) <= 0)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(["DistMult", "CP", "ComplEx", "MF"]), st.integers(1, 5), st.integers(0, 10_000))
def test_bilinear_scores_are_linear_in_the_object(kind, dim, seed):
    m = init_model(kind, dim, 4, 1, InitSpec("normal", 1.0, seed))
    table = m.entity_obj if kind == "CP" else m.entity
    a, b = table[1].copy(), table[2].copy()
    table[3] = 2.0 * a - 0.5 * b
    f = score_candidates(m, 0, 0, [1, 2, 3])
    assert f[2] == pytest.approx(2.0 * f[0] - 0.5 * f[1], abs=1e-9)
