"""Weight policies, model ranking, and the hybrid baseline."""

from __future__ import annotations

import numpy as np
import pytest

from hyperec.data import InteractionDataset
from hyperec.ensemble import (WeightPolicy, hybrid_rank, hybrid_scores,
                              rank_models, uniform_policy, weighted_policy)
from hyperec.errors import ConfigError, DataError
from hyperec.hypergraph import (KIND_UI, KIND_UU, assemble, build_model_edges,
                                build_ui_edges, build_uu_edges, model_kind)
from hyperec.recommenders import RankingList, rank_topk

from conftest import as_split

FOUR_RANKS = {"bpr": 1, "warp": 2, "wrmf": 3, "pop": 4}


def _list_of(name: str, rows: dict[int, list[int]], k: int) -> RankingList:
    packed = {u: tuple((i, float(k - pos)) for pos, i in enumerate(items))
              for u, items in rows.items()}
    return RankingList(name, k, packed)


# ---------------------------------------------------------------------------
# weight policies

def test_weighted_policy_rank_decay_values():
    policy = weighted_policy(FOUR_RANKS)
    got = [policy.model_weight(n) for n in ("bpr", "warp", "wrmf", "pop")]
    assert got == [0.5, 0.45, 0.40, 0.35]


def test_uniform_policy_is_flat():
    policy = uniform_policy()
    assert policy.weight_for(KIND_UI) == 1.0
    assert policy.weight_for(KIND_UU) == 1.0
    assert policy.weight_for(model_kind("anything")) == 1.0


def test_weight_for_dispatches_by_kind():
    policy = weighted_policy({"bpr": 1}, w_ui=2.0, w_uu=3.0, w_m_base=0.5,
                             decay_per_rank=0.0)
    assert policy.weight_for(KIND_UI) == 2.0
    assert policy.weight_for(KIND_UU) == 3.0
    assert policy.weight_for(model_kind("bpr")) == 0.5


def test_zero_decay_uniform_base_reduces_to_uniform():
    flat = uniform_policy()
    ranked = weighted_policy(FOUR_RANKS, w_m_base=1.0, decay_per_rank=0.0)
    for name in FOUR_RANKS:
        assert ranked.model_weight(name) == flat.model_weight(name) == 1.0


def test_zero_decay_builds_identical_graph(fx_split, fx_lists):
    ui = build_ui_edges(fx_split)
    uu = build_uu_edges(fx_split, k_nn=10)
    model_edges = build_model_edges(list(fx_lists.values()),
                                    fx_split.num_users, fx_split.num_items)
    ranks = {"bpr": 1, "warp": 2, "wrmf": 3}
    flat = assemble(ui, uu, model_edges, uniform_policy(),
                    fx_split.num_users, fx_split.num_items)
    ranked = assemble(ui, uu, model_edges,
                      weighted_policy(ranks, w_m_base=1.0, decay_per_rank=0.0),
                      fx_split.num_users, fx_split.num_items)
    assert flat.same_structure(ranked)


@pytest.mark.parametrize("kwargs", [
    {"w_ui": 0.0},
    {"w_uu": -1.0},
    {"w_m_base": float("nan")},
    {"decay_per_rank": -0.1},
    {"decay_per_rank": 1.0},
])
def test_policy_rejects_bad_fields(kwargs):
    with pytest.raises(ConfigError):
        WeightPolicy(**kwargs)


def test_policy_rejects_decay_that_zeroes_worst_rank():
    # rank 3 would get 1 - 0.6 * 2 = -0.2 of the base
    with pytest.raises(ConfigError, match="non-positive"):
        weighted_policy({"a": 1, "b": 2, "c": 3}, decay_per_rank=0.6)


def test_policy_rejects_non_permutation_ranks():
    with pytest.raises(ConfigError, match="permutation"):
        weighted_policy({"a": 1, "b": 3})


def test_policy_rejects_unranked_model():
    policy = weighted_policy({"bpr": 1})
    with pytest.raises(ConfigError, match="missing"):
        policy.model_weight("warp")


def test_decay_without_ranks_rejected_at_lookup():
    policy = WeightPolicy(decay_per_rank=0.1, model_ranks={})
    with pytest.raises(ConfigError, match="no rank"):
        policy.model_weight("bpr")


def test_weighted_policy_needs_models():
    with pytest.raises(ConfigError, match="at least one"):
        weighted_policy({})


def test_weight_for_unknown_kind():
    with pytest.raises(ConfigError, match="unknown hyperedge kind"):
        uniform_policy().weight_for("??")


# ---------------------------------------------------------------------------
# validation ranking

def test_rank_models_orders_by_precision():
    validation = {0: frozenset({0, 1}), 1: frozenset({2})}
    lists = [
        _list_of("good", {0: [0, 1], 1: [2, 3]}, k=2),    # precision 0.75
        _list_of("poor", {0: [4, 5], 1: [4, 5]}, k=2),    # precision 0.0
        _list_of("fair", {0: [0, 5], 1: [4, 5]}, k=2),    # precision 0.25
    ]
    assert rank_models(lists, validation) == {"good": 1, "fair": 2, "poor": 3}


def test_rank_models_ties_break_lexicographically():
    validation = {0: frozenset({0})}
    lists = [
        _list_of("zeta", {0: [0, 1]}, k=2),
        _list_of("alpha", {0: [0, 2]}, k=2),
    ]
    assert rank_models(lists, validation) == {"alpha": 1, "zeta": 2}


def test_rank_models_rejects_empty_inputs():
    with pytest.raises(DataError, match="no ranking lists"):
        rank_models([], {0: frozenset({0})})
    with pytest.raises(DataError, match="empty validation"):
        rank_models([_list_of("m", {0: [0]}, k=1)], {})


def test_rank_models_rejects_duplicates_and_missing_users():
    validation = {0: frozenset({0})}
    dup = _list_of("m", {0: [0]}, k=1)
    with pytest.raises(DataError, match="duplicate"):
        rank_models([dup, dup], validation)
    with pytest.raises(DataError, match="miss user index"):
        rank_models([_list_of("m", {1: [0]}, k=1)], validation)


def test_rank_models_on_fixture_is_a_permutation(fx_lists, fx_split):
    ranks = rank_models(list(fx_lists.values()), fx_split.validation)
    assert sorted(ranks) == sorted(fx_lists)
    assert sorted(ranks.values()) == [1, 2, 3]


# ---------------------------------------------------------------------------
# hybrid baseline

class _Table:
    """Fixed score matrix standing in for a trained model."""

    def __init__(self, scores):
        self._scores = np.asarray(scores, dtype=float)

    def user_scores(self, user: int) -> np.ndarray:
        return self._scores[user]


def _tiny_split():
    pairs = [("u0", "i0"), ("u0", "i1"), ("u1", "i2"), ("u1", "i3"),
             ("u2", "i4"), ("u2", "i5")]
    return as_split(InteractionDataset.from_pairs(pairs))


def test_hybrid_scores_hand_check():
    sp = _tiny_split()
    # user 0 masks items {0, 1}; A spans [1, 5] over the rest, B is constant.
    a = _Table(np.vstack([[9, 9, 1.0, 2.0, 3.0, 5.0]] * 3))
    b = _Table(np.vstack([[0, 0, 4.0, 4.0, 4.0, 4.0]] * 3))
    out = hybrid_scores({"a": a, "b": b}, sp, {"a": 3.0, "b": 1.0}, user=0)
    assert out[0] == -np.inf and out[1] == -np.inf
    np.testing.assert_allclose(out[2:], [0.125, 0.3125, 0.5, 0.875])


def test_hybrid_constant_source_contributes_half():
    sp = _tiny_split()
    flat = _Table(np.full((3, 6), 7.0))
    out = hybrid_scores({"flat": flat}, sp, {"flat": 2.0}, user=1)
    visible = np.delete(out, [2, 3])
    np.testing.assert_array_equal(visible, 0.5)


def test_hybrid_single_model_preserves_order(fx_models, fx_split):
    model = fx_models["bpr"]
    direct = rank_topk(model, fx_split, k=10, model_name="bpr")
    blended = hybrid_rank({"bpr": model}, fx_split, {"bpr": 1.0}, k=10)
    for u in fx_split.users():
        assert blended.items_of(u) == direct.items_of(u)


def test_hybrid_weight_scale_invariance(fx_models, fx_split):
    weights = {"bpr": 1.0, "warp": 2.0, "wrmf": 0.5}
    doubled = {name: 2 * w for name, w in weights.items()}
    u = 3
    base = hybrid_scores(fx_models, fx_split, weights, u)
    scaled = hybrid_scores(fx_models, fx_split, doubled, u)
    np.testing.assert_allclose(scaled, base)


def test_hybrid_insertion_order_irrelevant(fx_models, fx_split):
    weights = {"bpr": 1.0, "warp": 2.0, "wrmf": 0.5}
    forward = hybrid_scores(dict(fx_models), fx_split, weights, 0)
    backward = hybrid_scores(dict(reversed(fx_models.items())), fx_split,
                             dict(reversed(weights.items())), 0)
    np.testing.assert_array_equal(forward, backward)


def test_hybrid_rank_never_leaks_train(fx_models, fx_split):
    weights = {name: 1.0 for name in fx_models}
    lists = hybrid_rank(fx_models, fx_split, weights, k=10)
    lists.validate(fx_split)
    for u in fx_split.users():
        assert not (set(lists.items_of(u)) & fx_split.train.items_of(u))


def test_hybrid_rejects_mismatched_keys(fx_models, fx_split):
    with pytest.raises(ConfigError, match="do not match"):
        hybrid_scores(fx_models, fx_split, {"bpr": 1.0}, 0)
    with pytest.raises(ConfigError, match="at least one"):
        hybrid_scores({}, fx_split, {}, 0)


def test_hybrid_rejects_bad_weights(fx_models, fx_split):
    weights = {"bpr": 1.0, "warp": 0.0, "wrmf": 1.0}
    with pytest.raises(ConfigError, match="positive"):
        hybrid_scores(fx_models, fx_split, weights, 0)


def test_hybrid_rejects_bad_score_shape(fx_split):
    stub = _Table(np.zeros((fx_split.num_users, 3)))
    with pytest.raises(DataError, match="shape"):
        hybrid_scores({"stub": stub}, fx_split, {"stub": 1.0}, 0)
