"""Hyperedge weight policies and the score-averaging hybrid baseline.

Interaction and neighborhood edges carry weight 1.0.  Model edges either
share one uniform weight (:func:`uniform_policy`) or decay linearly with
the model's validation rank (:func:`weighted_policy`): the rank-r model's
edges weigh ``w_m_base * (1 - decay_per_rank * (r - 1))``, so with the
defaults the best model keeps 0.5 and each later rank loses 10% of the
base.  With ``decay_per_rank = 0`` and a uniform base the two policies
coincide.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .data import SplitDataset
from .errors import ConfigError, DataError
from .hypergraph import KIND_UI, KIND_UU, model_name_of
from .recommenders import RankingList, topk_row

logger = logging.getLogger(__name__)

DEFAULT_MODEL_BASE_WEIGHT = 0.5
DEFAULT_DECAY_PER_RANK = 0.10


class ScoreSource(Protocol):  # pragma: no cover - structural type only
    """Anything that can score every item for a user."""

    def user_scores(self, user: int) -> np.ndarray: ...


@dataclass(frozen=True)
class WeightPolicy:
    """Per-kind hyperedge weights, with optional rank decay for model edges."""

    w_ui: float = 1.0
    w_uu: float = 1.0
    w_m_base: float = DEFAULT_MODEL_BASE_WEIGHT
    decay_per_rank: float = DEFAULT_DECAY_PER_RANK
    model_ranks: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for name, value in (("w_ui", self.w_ui), ("w_uu", self.w_uu),
                            ("w_m_base", self.w_m_base)):
            if not (value > 0 and np.isfinite(value)):
                raise ConfigError(f"{name} must be positive, got {value}")
        if not (0 <= self.decay_per_rank < 1):
            raise ConfigError(
                f"decay_per_rank must lie in [0, 1), got {self.decay_per_rank}")
        ranks = dict(self.model_ranks)
        if ranks:
            if sorted(ranks.values()) != list(range(1, len(ranks) + 1)):
                raise ConfigError(
                    f"model_ranks must be a permutation of 1..{len(ranks)}, "
                    f"got {ranks}")
            worst = max(ranks.values())
            if self.w_m_base * (1.0 - self.decay_per_rank * (worst - 1)) <= 0:
                raise ConfigError(
                    f"decay_per_rank={self.decay_per_rank} drives rank-{worst} "
                    f"model edges to a non-positive weight")

    def model_weight(self, model_name: str) -> float:
        """Weight of one model's hyperedges under this policy."""
        if not self.model_ranks:
            if self.decay_per_rank:
                raise ConfigError(
                    f"policy decays with rank but model {model_name!r} has no rank")
            return self.w_m_base
        if model_name not in self.model_ranks:
            raise ConfigError(f"model {model_name!r} missing from policy ranks "
                              f"{sorted(self.model_ranks)}")
        rank = self.model_ranks[model_name]
        return self.w_m_base * (1.0 - self.decay_per_rank * (rank - 1))

    def weight_for(self, kind: str) -> float:
        """Weight of a hyperedge kind tag."""
        if kind == KIND_UI:
            return self.w_ui
        if kind == KIND_UU:
            return self.w_uu
        name = model_name_of(kind)
        if name is None:
            raise ConfigError(f"unknown hyperedge kind {kind!r}")
        return self.model_weight(name)


def uniform_policy(w_ui: float = 1.0, w_uu: float = 1.0,
                   w_m: float = 1.0) -> WeightPolicy:
    """Every edge family at a flat weight; model edges undifferentiated."""
    return WeightPolicy(w_ui=w_ui, w_uu=w_uu, w_m_base=w_m,
                        decay_per_rank=0.0, model_ranks={})


def weighted_policy(model_ranks: Mapping[str, int], w_ui: float = 1.0,
                    w_uu: float = 1.0,
                    w_m_base: float = DEFAULT_MODEL_BASE_WEIGHT,
                    decay_per_rank: float = DEFAULT_DECAY_PER_RANK) -> WeightPolicy:
    """Rank-differentiated model weights over validated model ranks."""
    if not model_ranks:
        raise ConfigError("weighted_policy needs at least one ranked model")
    return WeightPolicy(w_ui=w_ui, w_uu=w_uu, w_m_base=w_m_base,
                        decay_per_rank=decay_per_rank,
                        model_ranks=dict(model_ranks))


def rank_models(lists: Sequence[RankingList],
                validation: Mapping[int, frozenset[int]]) -> dict[str, int]:
    """Rank models 1..M by validation precision, ties lexicographic by name.

    Precision is the mean over validation users of the fraction of each
    model's list that hits the user's validation items.
    """
    if not lists:
        raise DataError("no ranking lists to rank")
    if not validation:
        raise DataError("cannot rank models against an empty validation split")
    scores: dict[str, float] = {}
    for rl in lists:
        if rl.model_name in scores:
            raise DataError(f"duplicate model name {rl.model_name!r}")
        hits = []
        for u, held in validation.items():
            if u not in rl.rows:
                raise DataError(
                    f"rankings for {rl.model_name!r} miss user index {u}")
            row_items = rl.items_of(u)
            hits.append(len(held & set(row_items)) / len(row_items))
        scores[rl.model_name] = float(np.mean(hits)) if hits else 0.0
    ordered = sorted(scores, key=lambda name: (-scores[name], name))
    ranks = {name: rank for rank, name in enumerate(ordered, start=1)}
    logger.info("model validation ranking: %s",
                {n: round(scores[n], 4) for n in ordered})
    return ranks


# ---------------------------------------------------------------------------
# hybrid baseline

def _normalized_scores(source: ScoreSource, user: int,
                       masked: frozenset[int], num_items: int) -> np.ndarray:
    scores = np.asarray(source.user_scores(user), dtype=float)
    if scores.shape != (num_items,):
        raise DataError(
            f"score source returned shape {scores.shape}, expected ({num_items},)")
    keep = np.ones(num_items, dtype=bool)
    if masked:
        keep[sorted(masked)] = False
    visible = scores[keep]
    low, high = float(visible.min()), float(visible.max())
    out = np.zeros(num_items)
    if high == low:
        out[keep] = 0.5
    else:
        out[keep] = (scores[keep] - low) / (high - low)
    return out


def hybrid_scores(models: Mapping[str, ScoreSource], split: SplitDataset,
                  weights: Mapping[str, float], user: int) -> np.ndarray:
    """Weighted average of per-model min-max-normalized scores for one user.

    Each model's scores are normalized to [0, 1] over the user's unmasked
    items (a constant vector contributes 0.5 uniformly); masked (train)
    items come back as ``-inf`` so they can never be recommended.
    """
    if not models:
        raise ConfigError("hybrid needs at least one score source")
    if set(weights) != set(models):
        raise ConfigError(
            f"hybrid weights {sorted(weights)} do not match models {sorted(models)}")
    for name, w in weights.items():
        if not (w > 0 and np.isfinite(w)):
            raise ConfigError(f"hybrid weight for {name!r} must be positive, got {w}")

    num_items = split.num_items
    masked = split.train.items_of(user)
    total = sum(weights.values())
    acc = np.zeros(num_items)
    for name in sorted(models):
        acc += weights[name] * _normalized_scores(models[name], user, masked, num_items)
    acc /= total
    if masked:
        acc[sorted(masked)] = -np.inf
    return acc


def hybrid_rank(models: Mapping[str, ScoreSource], split: SplitDataset,
                weights: Mapping[str, float], k: int = 10,
                model_name: str = "Hybrid") -> RankingList:
    """Top-k lists from the hybrid weighted-average scores."""
    rows: dict[int, tuple[tuple[int, float], ...]] = {}
    for u in split.users():
        scores = hybrid_scores(models, split, weights, u)
        top = topk_row(scores, k, split.train.items_of(u))
        rows[u] = tuple((i, float(scores[i])) for i in top)
    return RankingList(model_name, k, rows)
