"""Shared fixtures: small deterministic datasets and pre-trained models.

Heavy objects (trained models, assembled graphs) are session-scoped; every
consumer treats them as read-only.
"""

from __future__ import annotations

import numpy as np
import pytest

from hyperec.data import InteractionDataset, SplitDataset, split
from hyperec.ensemble import uniform_policy
from hyperec.hypergraph import (assemble, build_model_edges, build_ui_edges,
                                build_uu_edges)
from hyperec.pipeline import derive_seed
from hyperec.ranker import compute_affinity
from hyperec.recommenders import TRAINERS, rank_topk
from hyperec.synthetic import fixture_dataset, planted_dataset

FIXTURE_SEED = 7
PLANTED_SEED = 1

# Iteration counts trimmed for test turnaround; quality-sensitive tests set
# their own.
FAST_HYPERPARAMS = {
    "bpr": {"iterations": 20},
    "warp": {"iterations": 12},
    "wrmf": {"iterations": 8},
}


def as_split(ds: InteractionDataset) -> SplitDataset:
    """Wrap a bare dataset as an all-train split (no holdout)."""
    empty = {u: frozenset() for u in range(ds.num_users)}
    return SplitDataset(train=ds, validation=dict(empty), test=dict(empty),
                        seed=0, n_test=0, n_val=0, min_train=0)


@pytest.fixture(scope="session")
def fx_ds() -> InteractionDataset:
    return fixture_dataset()


@pytest.fixture(scope="session")
def fx_split(fx_ds) -> SplitDataset:
    return split(fx_ds, seed=derive_seed(FIXTURE_SEED, "split"))


@pytest.fixture(scope="session")
def fx_models(fx_split) -> dict:
    return {
        name: TRAINERS[name](fx_split.train, FAST_HYPERPARAMS[name],
                             seed=derive_seed(FIXTURE_SEED, name))
        for name in ("bpr", "warp", "wrmf")
    }


@pytest.fixture(scope="session")
def fx_lists(fx_models, fx_split) -> dict:
    return {name: rank_topk(model, fx_split, k=10, model_name=name)
            for name, model in fx_models.items()}


@pytest.fixture(scope="session")
def fx_graph(fx_split, fx_lists):
    """The full ensemble hypergraph over the 50-user fixture."""
    ui = build_ui_edges(fx_split)
    uu = build_uu_edges(fx_split, k_nn=10)
    model_edges = build_model_edges(list(fx_lists.values()),
                                    fx_split.num_users, fx_split.num_items)
    return assemble(ui, uu, model_edges, uniform_policy(),
                    fx_split.num_users, fx_split.num_items)


@pytest.fixture(scope="session")
def fx_affinity(fx_graph):
    return compute_affinity(fx_graph)


@pytest.fixture(scope="session")
def planted_split() -> SplitDataset:
    ds = planted_dataset(200, 300, rank=2, density=0.05, seed=PLANTED_SEED)
    return split(ds, seed=derive_seed(PLANTED_SEED, "split"))


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
