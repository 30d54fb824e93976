"""Regularized hypergraph ranking: affinity operator and fixed-point solver.

The affinity of an assembled hypergraph with incidence H, edge weights W,
weighted node degrees D_n, and edge degrees D_e is

    A = D_n^{-1/2} H W D_e^{-1} H^T D_n^{-1/2}

with zero-degree nodes handled by the pseudo-inverse convention (their
rows and columns are zero).  A is kept in factored form A = P P^T with
P = D_n^{-1/2} H (W D_e^{-1})^{1/2}, which preserves exact symmetry and
avoids ever materializing a dense matrix for large node spaces.

Per-user ranking scores solve

    minimize  (1/2) f^T (I - A) f + (vartheta/2) ||f - y||^2

whose closed form is f* = vartheta/(1+vartheta) (I - A/(1+vartheta))^{-1} y.
The solver runs the fixed-point iteration f <- alpha A f + (1-alpha) y with
alpha = 1/(1+vartheta), started from (1-alpha) y and stopped when the
L-infinity change falls below tolerance.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .data import SplitDataset
from .errors import ConfigError, ConvergenceError, DataError, NumericError
from .hypergraph import Hypergraph
from .recommenders import RankingList, topk_row

logger = logging.getLogger(__name__)

DEFAULT_DENSE_THRESHOLD = 4096


@dataclass
class RankerConfig:
    """Solver settings: regularization strength and stopping rule."""

    vartheta: float = 0.5
    tol: float = 1e-8
    max_iter: int = 1000

    def __post_init__(self):
        if not (self.vartheta > 0 and np.isfinite(self.vartheta)):
            raise ConfigError(f"vartheta must be a positive real, got {self.vartheta}")
        if not (self.tol > 0):
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")

    @property
    def alpha(self) -> float:
        """Mixing coefficient 1/(1+vartheta), in (0, 1)."""
        return 1.0 / (1.0 + self.vartheta)


@dataclass
class AffinityOperator:
    """The normalized affinity A = P P^T of a hypergraph, stored factored.

    ``factor`` is the num_nodes x num_edges matrix P; applying A costs two
    sparse products.  ``matrix`` materializes A sparsely on demand and
    ``to_dense`` additionally guards against densifying large node spaces.
    """

    factor: sp.csr_matrix
    num_users: int
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD
    _factor_t: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        self._factor_t = self.factor.T.tocsr()

    @property
    def num_nodes(self) -> int:
        return self.factor.shape[0]

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """A as a sparse symmetric matrix (entries >= 0)."""
        return (self.factor @ self._factor_t).tocsr()

    def to_dense(self) -> np.ndarray:
        if self.num_nodes > self.dense_threshold:
            raise NumericError(
                f"refusing to densify a {self.num_nodes}-node affinity matrix "
                f"(threshold {self.dense_threshold})")
        return self.matrix.toarray()

    def apply(self, vec_or_block: np.ndarray) -> np.ndarray:
        """A @ x via the factored form, for a vector or a column block."""
        return self.factor @ (self._factor_t @ vec_or_block)

    def spectral_radius_estimate(self, iterations: int = 200, seed: int = 0) -> float:
        """Largest eigenvalue estimate by power iteration (A is PSD)."""
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.num_nodes)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iterations):
            w = self.apply(v)
            norm = np.linalg.norm(w)
            if norm == 0:
                return 0.0
            v = w / norm
            lam = float(v @ self.apply(v))
        return lam


def compute_affinity(hg: Hypergraph,
                     dense_threshold: int = DEFAULT_DENSE_THRESHOLD) -> AffinityOperator:
    """Build the affinity operator of an assembled hypergraph."""
    if np.any(hg.edge_degrees == 0):
        raise DataError("hypergraph has an empty hyperedge; affinity undefined")
    inv_sqrt_deg = np.divide(1.0, np.sqrt(hg.node_degrees),
                             out=np.zeros(hg.num_nodes),
                             where=hg.node_degrees > 0)
    edge_scale = np.sqrt(hg.weights / hg.edge_degrees)
    factor = sp.diags(inv_sqrt_deg) @ hg.incidence @ sp.diags(edge_scale)
    return AffinityOperator(factor.tocsr(), hg.num_users, dense_threshold)


def solve_ranking_block(A: AffinityOperator, Y: np.ndarray,
                        cfg: RankerConfig) -> np.ndarray:
    """Solve the ranking system for a block of query columns at once.

    ``Y`` is num_nodes x B; each column is an independent query vector and
    the iteration stops when every column's L-infinity change is below
    ``cfg.tol``.  Raises :class:`ConvergenceError` at the iteration cap.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] != A.num_nodes:
        raise DataError(f"query block has {Y.shape[0]} rows, expected {A.num_nodes}")
    if not np.isfinite(Y).all():
        raise DataError("query block contains non-finite entries")
    alpha = cfg.alpha
    F = (1.0 - alpha) * Y
    for _ in range(cfg.max_iter):
        F_next = alpha * A.apply(F) + (1.0 - alpha) * Y
        delta = float(np.max(np.abs(F_next - F)))
        F = F_next
        if delta < cfg.tol:
            return F
    raise ConvergenceError(
        f"ranking solve did not reach tol={cfg.tol} within {cfg.max_iter} "
        f"iterations (last delta {delta:.3e})", last_delta=delta)


def solve_ranking(A: AffinityOperator, y: np.ndarray, cfg: RankerConfig) -> np.ndarray:
    """Solve the regularized ranking problem for one query vector."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DataError(f"query vector must be 1-D, got shape {y.shape}")
    return solve_ranking_block(A, y[:, None], cfg)[:, 0]


def ranking_loss(A: AffinityOperator, f: np.ndarray, y: np.ndarray,
                 vartheta: float) -> float:
    """Diagnostic loss (1/2) f^T (I - A) f + (vartheta/2) ||f - y||^2.

    The closed-form solution implemented by :func:`solve_ranking` is the
    exact minimizer of this expression.
    """
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=float)
    smooth = 0.5 * float(f @ f - f @ A.apply(f))
    fit = 0.5 * vartheta * float(np.sum((f - y) ** 2))
    return smooth + fit


def query_vector(hg: Hypergraph, user: int) -> np.ndarray:
    """One-hot query over the node space for a user."""
    if not (0 <= user < hg.num_users):
        raise DataError(f"user index {user} outside 0..{hg.num_users - 1}")
    y = np.zeros(hg.num_users + hg.num_items)
    y[user] = 1.0
    return y


def recommend(hg: Hypergraph, A: AffinityOperator, split: SplitDataset, user: int,
              k: int = 10, cfg: RankerConfig | None = None) -> list[int]:
    """Top-k item indices for one user by hypergraph ranking.

    Solves with the user's one-hot query, reads the item segment of the
    solution, masks the user's train items, and ranks by descending score
    with ties broken by ascending item index.
    """
    cfg = cfg if cfg is not None else RankerConfig()
    f = solve_ranking(A, query_vector(hg, user), cfg)
    item_scores = f[hg.num_users:]
    return topk_row(item_scores, k, split.train.items_of(user))


def rank_all_users(hg: Hypergraph, A: AffinityOperator, split: SplitDataset, *,
                   k: int = 10, cfg: RankerConfig | None = None,
                   model_name: str = "H", block_size: int = 128,
                   threads: int = 1,
                   users: list[int] | None = None) -> RankingList:
    """Hypergraph-ranked top-k lists for every (or a subset of) users.

    Queries are solved in column blocks; blocks are independent, so thread
    counts do not change results.
    """
    cfg = cfg if cfg is not None else RankerConfig()
    train = split.train
    target_users = list(split.users()) if users is None else list(users)
    max_degree = max((len(train.items_of(u)) for u in target_users), default=0)
    if k > hg.num_items - max_degree:
        raise DataError(
            f"k={k} exceeds the {hg.num_items - max_degree} unmasked items "
            f"available to the densest user")

    blocks = [target_users[s:s + block_size]
              for s in range(0, len(target_users), block_size)]

    def solve_block(block: list[int]) -> np.ndarray:
        Y = np.zeros((hg.num_nodes, len(block)))
        Y[block, np.arange(len(block))] = 1.0
        return solve_ranking_block(A, Y, cfg)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            solved = list(pool.map(solve_block, blocks))
    else:
        solved = [solve_block(block) for block in blocks]

    rows: dict[int, tuple[tuple[int, float], ...]] = {}
    for block, F in zip(blocks, solved):
        item_block = F[hg.num_users:, :]
        for col, u in enumerate(block):
            scores = item_block[:, col]
            top = topk_row(scores, k, train.items_of(u))
            rows[u] = tuple((i, float(scores[i])) for i in top)
    return RankingList(model_name, k, rows)
