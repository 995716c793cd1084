import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import dataset_from_matrix

from kgrec.data import (
    DataFormatError,
    build_dataset,
    dataset_stats,
    load_corpus,
    load_interactions,
    load_prepared,
    recast_to_triples,
    resplit,
    save_prepared,
    triples_to_pairs,
)


def test_adjacency_line_expands_in_file_order(tmp_path):
    f = tmp_path / "train.txt"
    f.write_text("0 12 7\n\n1\n")
    assert load_interactions(f) == [(0, 12), (0, 7)]


def test_pairs_keep_duplicates(tmp_path):
    f = tmp_path / "p.tsv"
    f.write_text("3\t5\n3\t5\n")
    assert load_interactions(f, "pairs") == [(3, 5), (3, 5)]


def test_malformed_token_names_line(tmp_path):
    f = tmp_path / "train.txt"
    f.write_text("0 twelve\n")
    with pytest.raises(DataFormatError, match=r":1: malformed token 'twelve'"):
        load_interactions(f)
    f.write_text("0 1\n\n2 x\n")
    with pytest.raises(DataFormatError, match=r":3:"):
        load_interactions(f)


def test_pairs_line_with_three_tokens_is_rejected(tmp_path):
    f = tmp_path / "p.tsv"
    f.write_text("1\t2\t3\n")
    with pytest.raises(DataFormatError, match=":1:"):
        load_interactions(f, "pairs")


def test_empty_file_is_an_error(tmp_path):
    f = tmp_path / "train.txt"
    f.write_text("\n\n")
    with pytest.raises(DataFormatError, match="empty"):
        load_interactions(f)


def test_missing_file_raises_oserror(tmp_path):
    with pytest.raises(OSError):
        load_interactions(tmp_path / "nope.txt")


def test_zero_holdout_keeps_everything_in_train():
    ds = build_dataset([(0, 1), (0, 2), (1, 1), (1, 3)])
    assert all(len(v) == 0 for v in ds.valid_pos)
    assert ds.num_interactions("train") == 4


def test_ids_follow_first_appearance_over_train_then_test():
    ds = build_dataset([(9, 4), (7, 4), (9, 2)], [(5, 8)])
    assert ds.user_ids == (9, 7, 5)
    assert ds.item_ids == (4, 2, 8)
    assert ds.cold_users == 1 and ds.cold_items == 1
    assert len(ds.warnings) == 2


def test_ten_percent_holdout_takes_one_of_ten():
    ds = build_dataset([(0, i) for i in range(10)] + [(1, i) for i in range(9)], valid_fraction=0.1)
    assert len(ds.valid_pos[0]) == 1 and len(ds.train_pos[0]) == 9
    assert len(ds.valid_pos[1]) == 0  # floor(0.9) = 0


def test_duplicates_collapse():
    ds = build_dataset([(0, 1), (0, 1), (0, 2)])
    assert ds.train_pos[0].tolist() == [0, 1]


def test_test_pairs_repeating_train_are_dropped():
    ds = build_dataset([(0, 1), (0, 2)], [(0, 2), (0, 3)])
    assert ds.test_pos[0].tolist() == [2]
    assert any("dropped" in w for w in ds.warnings)


def test_valid_fraction_one_is_rejected():
    with pytest.raises(ValueError):
        build_dataset([(0, 1)], valid_fraction=1.0)
    with pytest.raises(ValueError):
        build_dataset([])


pairs_strategy = st.lists(
    st.tuples(st.integers(0, 15), st.integers(0, 25)), min_size=1, max_size=120
)


@settings(max_examples=60, deadline=None)
@given(pairs_strategy, pairs_strategy, st.sampled_from([0.0, 0.1, 0.3, 0.5]), st.integers(0, 1000))
def test_partitions_are_disjoint_and_cover_train(train, test, frac, seed):
    ds = build_dataset(train, test, valid_fraction=frac, seed=seed)
    ds.check()
    u_index = {u: k for k, u in enumerate(ds.user_ids)}
    i_index = {i: k for k, i in enumerate(ds.item_ids)}
    expected = {(u_index[u], i_index[i]) for u, i in train}
    got = {(u, int(i)) for u in range(ds.num_users) for s in ("train", "valid") for i in ds.split(s)[u]}
    assert got == expected
    again = build_dataset(train, test, valid_fraction=frac, seed=seed)
    for a, b in zip(ds.valid_pos, again.valid_pos):
        assert np.array_equal(a, b)


@settings(max_examples=40, deadline=None)
@given(pairs_strategy, st.integers(0, 100))
def test_resplit_preserves_train_union(train, seed):
    ds = build_dataset(train, valid_fraction=0.2, seed=0)
    ds2 = resplit(ds, 0.3, seed)
    ds2.check()
    for u in range(ds.num_users):
        a = np.union1d(ds.train_pos[u], ds.valid_pos[u])
        b = np.union1d(ds2.train_pos[u], ds2.valid_pos[u])
        assert np.array_equal(a, b)
        assert len(ds2.valid_pos[u]) == math.floor(0.3 * len(a) + 1e-9)


def test_recast_example():
    ds = dataset_from_matrix([[1, 0], [0, 1]])
    g = recast_to_triples(ds)
    assert g.triples.tolist() == [[0, 0, 2], [1, 0, 3]]
    assert g.num_entities == 4 and g.num_relations == 1


def test_user_without_train_items_emits_no_triples():
    ds = dataset_from_matrix([[0, 0], [1, 1]])
    assert recast_to_triples(ds).triples[:, 0].tolist() == [1, 1]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.booleans(), min_size=4, max_size=4), min_size=1, max_size=8))
def test_recast_round_trip(rows):
    ds = dataset_from_matrix(np.array(rows, dtype=int))
    g = recast_to_triples(ds)
    assert len(g.triples) == ds.num_interactions("train")
    t = g.triples
    assert np.all(t[:, 0] < ds.num_users) and np.all(t[:, 2] >= ds.num_users)
    assert np.all(t[:, 1] == 0)
    keys = t[:, 0] * 1000 + t[:, 2]
    assert np.all(np.diff(keys) > 0)
    for a, b in zip(triples_to_pairs(g), ds.train_pos):
        assert np.array_equal(a, b)


def test_stats_dense_toy():
    ds = dataset_from_matrix([[1, 1], [1, 1]])
    st_ = dataset_stats(ds)
    assert (st_.num_users, st_.num_items, st_.num_interactions) == (2, 2, 4)
    assert st_.sparsity == 0.0
    assert st_.tsv_row("toy") == "toy\t2\t2\t4\t0.0000"


@settings(max_examples=40, deadline=None)
@given(pairs_strategy, pairs_strategy)
def test_sparsity_formula(train, test):
    ds = build_dataset(train, test, valid_fraction=0.2)
    s = dataset_stats(ds)
    assert 0.0 <= s.sparsity <= 1.0
    assert s.sparsity == 1.0 - s.num_interactions / (s.num_users * s.num_items)


def test_prepared_round_trip(tmp_path):
    ds = build_dataset([(5, 1), (5, 2), (6, 2), (6, 3), (6, 4)], [(5, 3)], valid_fraction=0.5, seed=3)
    save_prepared(ds, tmp_path / "prep")
    back = load_prepared(tmp_path / "prep")
    assert back.user_ids == ds.user_ids and back.item_ids == ds.item_ids
    for s in ("train", "valid", "test"):
        for a, b in zip(ds.split(s), back.split(s)):
            assert np.array_equal(a, b)
    first = (tmp_path / "prep" / "train.txt").read_bytes()
    save_prepared(back, tmp_path / "prep")
    assert (tmp_path / "prep" / "train.txt").read_bytes() == first


def test_load_corpus_without_test_file(tmp_path):
    (tmp_path / "train.txt").write_text("0 1 2\n1 2\n")
    ds = load_corpus(tmp_path)
    assert ds.num_interactions("test") == 0
    assert ds.num_interactions("train") == 3
