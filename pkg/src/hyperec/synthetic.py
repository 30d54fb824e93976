"""Deterministic synthetic interaction data for tests, demos, and smoke runs.

:func:`planted_dataset` plants a low-rank preference structure: every user
interacts with their top-scoring items under a rank-``rank`` factor model,
with per-user interaction counts spread log-normally around the density
target.  Trained recommenders can therefore be checked against a known
signal.
"""

from __future__ import annotations

import numpy as np

from .data import InteractionDataset
from .errors import ConfigError


def planted_dataset(num_users: int, num_items: int, *, rank: int = 2,
                    density: float = 0.05, degree_spread: float = 0.45,
                    seed: int = 0) -> InteractionDataset:
    """A dataset whose interactions are the top cells of a low-rank score.

    The total interaction count is exactly ``round(density * users * items)``;
    per-user counts vary with ``degree_spread`` (0 = uniform) so a subset of
    users stays above holdout-protocol thresholds even at low densities.
    External IDs are ``u<N>`` / ``i<N>``.
    """
    if not (0 < density < 1):
        raise ConfigError(f"density must lie in (0, 1), got {density}")
    if rank < 1:
        raise ConfigError(f"rank must be >= 1, got {rank}")
    total = int(round(density * num_users * num_items))
    if total < num_users:
        raise ConfigError(
            f"density {density} leaves fewer interactions ({total}) than users "
            f"({num_users})")

    rng = np.random.default_rng(seed)
    user_vecs = rng.standard_normal((num_users, rank))
    item_vecs = rng.standard_normal((num_items, rank))
    scores = user_vecs @ item_vecs.T

    # Spread per-user degrees log-normally, then round to hit the exact
    # total via largest-remainder apportionment.
    raw = np.exp(degree_spread * rng.standard_normal(num_users))
    quota = raw / raw.sum() * total
    counts = np.floor(quota).astype(int)
    remainder = total - int(counts.sum())
    if remainder > 0:
        frac_order = np.argsort(-(quota - counts), kind="stable")
        counts[frac_order[:remainder]] += 1
    counts = np.clip(counts, 1, num_items)
    # Clipping can perturb the sum; rebalance against the extremes.
    order = np.arange(num_users)
    while counts.sum() > total:
        counts[np.lexsort((order, -counts))[0]] -= 1
    while counts.sum() < total:
        counts[np.lexsort((order, counts))[0]] += 1

    item_order = np.arange(num_items)
    chosen = [list(np.lexsort((item_order, -scores[u]))[:counts[u]])
              for u in range(num_users)]

    # Top-of-list selection under a low-rank model concentrates on a few
    # items; swap every never-picked item into the user who scores it
    # highest, displacing their weakest pick that other users still cover.
    item_count = np.bincount(np.concatenate(chosen), minlength=num_items)
    for j in np.flatnonzero(item_count == 0):
        for u in np.lexsort((order, -scores[:, j])):
            picks = chosen[u]
            for pos in range(len(picks) - 1, -1, -1):
                if item_count[picks[pos]] >= 2:
                    item_count[picks[pos]] -= 1
                    item_count[j] += 1
                    picks[pos] = j
                    break
            else:
                continue
            break

    pairs = [(f"u{u}", f"i{int(i)}")
             for u in range(num_users) for i in chosen[u]]
    return InteractionDataset.from_pairs(pairs)


def fixture_dataset(num_users: int = 50, num_items: int = 80, *,
                    seed: int = 7) -> InteractionDataset:
    """The bundled small fixture: 50 users, every one of them dense enough
    to survive the default 10/5/5 holdout protocol."""
    return planted_dataset(num_users, num_items, rank=2, density=0.40,
                           degree_spread=0.12, seed=seed)
