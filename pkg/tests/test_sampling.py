import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgrec.rng import stream
from kgrec.training.sampling import PositiveIndex, corrupt_batch, sample_corruptions


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(2, 9), st.integers(1, 5), st.integers(0, 10_000))
def test_typed_corruptions_change_exactly_one_side(N, M, k, seed):
    rng = np.random.default_rng(seed)
    E = N + M
    triples = np.stack([rng.integers(0, N, 7), np.zeros(7, int), rng.integers(N, E, 7)], axis=1)
    out = corrupt_batch(triples, k, rng, E, num_users=N)
    assert out.shape == (7, k, 3)
    orig = triples[:, None, :]
    s_changed = out[..., 0] != orig[..., 0]
    o_changed = out[..., 2] != orig[..., 2]
    assert np.all(s_changed ^ o_changed)
    assert np.all(out[..., 1] == 0)
    assert np.all(out[..., 0] < N) and np.all(out[..., 2] >= N) and np.all(out[..., 2] < E)


def test_single_user_forces_object_side():
    rng = np.random.default_rng(0)
    out = sample_corruptions((0, 0, 3), 5, 20, rng, num_users=1)
    assert np.all(out[:, 0] == 0) and np.all(out[:, 2] != 3)


def test_small_side_samples_with_replacement():
    rng = np.random.default_rng(0)
    out = sample_corruptions((0, 0, 1), 4, 4, rng, num_users=1, side="object")
    assert set(out[:, 2].tolist()) <= {2, 3} and len(out) == 4


def test_degenerate_sides_are_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        sample_corruptions((0, 0, 1), 2, 1, rng, num_users=1, side="subject")
    with pytest.raises(ValueError):
        sample_corruptions((0, 0, 1), 2, 1, rng, num_users=1)
    with pytest.raises(ValueError):
        sample_corruptions((0, 0, 1), 5, 0, rng)


def test_corruptions_are_uniform_over_the_other_entities():
    rng = stream(0, "train", 0)
    n = 100_000
    out = corrupt_batch([(0, 0, 5)], n, rng, 10, num_users=5, side="object")[0]
    counts = np.bincount(out[:, 2], minlength=10)[5:]
    assert counts[0] == 0
    freq = counts[1:] / n
    assert np.all(np.abs(freq - 0.25) < 0.02)


def test_negative_items_avoid_positives():
    index = PositiveIndex([np.array([0, 2]), np.array([1])], num_items=4)
    rng = np.random.default_rng(1)
    neg = index.sample_negatives(np.array([0, 1, 0]), 50, rng)
    assert not np.isin(neg[[0, 2]], [0, 2]).any()
    assert not np.any(neg[1] == 1)
    full = PositiveIndex([np.arange(4)], num_items=4)
    with pytest.raises(ValueError):
        full.sample_negatives(np.array([0]), 1, rng)
