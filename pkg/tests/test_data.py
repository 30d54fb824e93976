"""Ingestion, indexing, and holdout-protocol behavior."""

from __future__ import annotations

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperec.data import (InteractionDataset, load_interactions, load_split,
                          save_interactions, save_split, split)
from hyperec.errors import ConfigError, DataError

from conftest import as_split


def test_from_pairs_collapses_duplicates():
    ds = InteractionDataset.from_pairs([("a", "x"), ("a", "y"), ("b", "x"),
                                        ("a", "x")])
    assert ds.num_users == 2
    assert ds.num_items == 2
    assert ds.num_interactions == 3
    assert ds.sparsity == 0.75


def test_index_maps_round_trip():
    ds = InteractionDataset.from_pairs([("u9", "i3"), ("u1", "i3"),
                                        ("u9", "i8")])
    for ext in ds.user_ids:
        assert ds.user_ids[ds.user_to_index[ext]] == ext
    for ext in ds.item_ids:
        assert ds.item_ids[ds.item_to_index[ext]] == ext
    # first-appearance order
    assert ds.user_ids == ("u9", "u1")
    assert ds.item_ids == ("i3", "i8")


def test_load_csv_with_header(tmp_path):
    p = tmp_path / "inter.csv"
    p.write_text("user_id,item_id\na,x\na,y\nb,x\na,x\n")
    ds = load_interactions(p)
    assert (ds.num_users, ds.num_items, ds.num_interactions) == (2, 2, 3)


def test_load_tsv_headerless(tmp_path):
    p = tmp_path / "inter.tsv"
    p.write_text("1\t10\n1\t11\n2\t10\n")
    ds = load_interactions(p, fmt="tsv")
    assert ds.num_users == 2 and ds.num_items == 2
    assert ds.num_interactions == 3


def test_load_rating_threshold(tmp_path):
    p = tmp_path / "rated.csv"
    p.write_text("u,i,rating\na,x,5\na,y,2\nb,x,4\n")
    assert load_interactions(p).num_interactions == 3
    assert load_interactions(p, rating_threshold=4.0).num_interactions == 2


def test_load_malformed_row_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,x\njusta\nb,y\n")
    with pytest.raises(DataError, match=":2:"):
        load_interactions(p)


def test_load_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(DataError, match="empty"):
        load_interactions(p)


def test_load_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_interactions(tmp_path / "nope.csv")


def test_load_unknown_format(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,x\n")
    with pytest.raises(ConfigError):
        load_interactions(p, fmt="parquet")


def test_save_then_load_round_trip(tmp_path, fx_ds):
    p = tmp_path / "dump.csv"
    save_interactions(fx_ds, p)
    back = load_interactions(p)
    # index order may legitimately differ; the external-ID pairs may not
    orig = {(fx_ds.user_ids[u], fx_ds.item_ids[i]) for u, i in fx_ds.interactions}
    got = {(back.user_ids[u], back.item_ids[i]) for u, i in back.interactions}
    assert got == orig


def test_split_arithmetic():
    pairs = [("u", f"i{j}") for j in range(25)]
    sd = split(InteractionDataset.from_pairs(pairs), seed=0)
    assert len(sd.test[0]) == 10
    assert len(sd.validation[0]) == 5
    assert len(sd.train.items_of(0)) == 10


def test_split_drops_short_profiles():
    pairs = [("short", f"i{j}") for j in range(19)]
    pairs += [("long", f"i{j}") for j in range(25)]
    sd = split(InteractionDataset.from_pairs(pairs), seed=0)
    assert sd.dropped_users == ("short",)
    assert sd.train.user_ids == ("long",)


def test_split_same_seed_same_result(fx_ds):
    a = split(fx_ds, seed=99)
    b = split(fx_ds, seed=99)
    assert a.test == b.test and a.validation == b.validation
    assert a.train.interactions == b.train.interactions


def test_split_all_dropped_errors():
    ds = InteractionDataset.from_pairs([("a", "x"), ("a", "y")])
    with pytest.raises(DataError, match="protocol"):
        split(ds, seed=0)


def test_split_negative_params_rejected(fx_ds):
    with pytest.raises(ConfigError):
        split(fx_ds, n_test=-1, seed=0)


def test_split_parts_partition_profiles(fx_split):
    for u in fx_split.users():
        train = fx_split.train.items_of(u)
        val = fx_split.validation[u]
        test = fx_split.test[u]
        assert len(test) == fx_split.n_test
        assert len(val) == fx_split.n_val
        assert len(train) >= fx_split.min_train
        assert not (train & val) and not (train & test) and not (val & test)
        assert fx_split.full_profile(u) == train | val | test


def test_interaction_row_placement():
    # interleave so user u's items land at indices 0 and 2
    ds = InteractionDataset.from_pairs([("u", "i0"), ("v", "i1"), ("u", "i2"),
                                        ("v", "i3")])
    row = ds.interaction_row(0).toarray().ravel()
    assert row.tolist() == [1, 0, 1, 0]


def test_interaction_row_degrees_match(fx_split):
    train = fx_split.train
    for u in fx_split.users():
        row = train.interaction_row(u)
        assert row.nnz == len(train.items_of(u))
        assert set(row.indices) == set(train.items_of(u))


def test_interaction_row_empty_is_flagged(caplog):
    ds = InteractionDataset(("lurker",), ("i0", "i1"), frozenset())
    with caplog.at_level(logging.WARNING):
        row = ds.interaction_row(0)
    assert row.nnz == 0
    assert any("empty" in rec.message for rec in caplog.records)


def test_interaction_row_out_of_range(fx_ds):
    with pytest.raises(DataError):
        fx_ds.interaction_row(fx_ds.num_users)


def test_split_manifest_round_trip(tmp_path, fx_ds, fx_split):
    p = tmp_path / "split.json"
    save_split(fx_split, p)
    back = load_split(p, fx_ds)
    assert back.test == fx_split.test
    assert back.validation == fx_split.validation
    assert back.train.interactions == fx_split.train.interactions
    assert back.dropped_users == fx_split.dropped_users


def test_split_manifest_is_byte_stable(tmp_path, fx_split):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    save_split(fx_split, a)
    save_split(fx_split, b)
    assert a.read_bytes() == b.read_bytes()


def test_load_split_rejects_foreign_manifest(tmp_path, fx_ds, fx_split):
    p = tmp_path / "split.json"
    save_split(fx_split, p)
    other = InteractionDataset.from_pairs([("nobody", "nothing")])
    with pytest.raises(DataError):
        load_split(p, other)


@settings(max_examples=50, deadline=None)
@given(st.sets(st.tuples(st.integers(0, 12), st.integers(0, 15)),
               min_size=1, max_size=120))
def test_from_pairs_never_distorts_counts(pairs):
    named = [(f"u{u}", f"i{i}") for u, i in pairs]
    ds = InteractionDataset.from_pairs(named)
    assert ds.num_interactions == len(pairs)
    assert ds.num_users == len({u for u, _ in pairs})
    assert ds.num_items == len({i for _, i in pairs})
    assert 0 < ds.sparsity <= 1
    rebuilt = {(ds.user_ids[u], ds.item_ids[i]) for u, i in ds.interactions}
    assert rebuilt == set(named)


def test_as_split_helper_shape(fx_ds):
    sd = as_split(fx_ds)
    assert sd.num_users == fx_ds.num_users
    assert all(len(sd.test[u]) == 0 for u in sd.users())
