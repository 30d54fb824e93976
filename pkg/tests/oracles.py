"""Independent dense reference implementations used to cross-check the package.

Everything here is deliberately written the slow, obvious way — dense
matrices, python loops, direct linear solves — so a disagreement with the
library points at the library.
"""

from __future__ import annotations

import math

import numpy as np


def dense_affinity(incidence: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Normalized node-affinity as an explicit dense triple product.

    Zero-degree nodes get zero rows/columns (pseudo-inverse of the degree
    matrix), matching the library's convention.
    """
    H = np.asarray(incidence, dtype=float)
    w = np.asarray(weights, dtype=float)
    node_deg = H @ w
    edge_deg = H.sum(axis=0)
    inv_sqrt = np.zeros_like(node_deg)
    pos = node_deg > 0
    inv_sqrt[pos] = 1.0 / np.sqrt(node_deg[pos])
    D_n = np.diag(inv_sqrt)
    return D_n @ H @ np.diag(w) @ np.diag(1.0 / edge_deg) @ H.T @ D_n


def dense_optimum(A: np.ndarray, y: np.ndarray, vartheta: float) -> np.ndarray:
    """Direct dense solve of the regularized ranking problem's optimum."""
    n = A.shape[0]
    alpha = 1.0 / (1.0 + vartheta)
    return (1.0 - alpha) * np.linalg.solve(np.eye(n) - alpha * A, y)


def quadratic_loss(A: np.ndarray, f: np.ndarray, y: np.ndarray,
                   vartheta: float) -> float:
    """The smoothness + fitting objective, recomputed densely."""
    smooth = 0.5 * (f @ f - f @ (A @ f))
    fit = 0.5 * vartheta * float(np.sum((f - y) ** 2))
    return float(smooth + fit)


def brute_cosine_neighbors(rows: np.ndarray, k_nn: int) -> list[list[int]]:
    """O(U^2) cosine scan over binary rows, in pure-python arithmetic.

    Zero rows have similarity 0 with everyone; ties break by ascending
    index.
    """
    sets = [frozenset(np.flatnonzero(np.asarray(r)).tolist()) for r in rows]
    out = []
    for u, mine in enumerate(sets):
        sims = []
        for v, theirs in enumerate(sets):
            if v == u:
                continue
            if mine and theirs:
                s = len(mine & theirs) / math.sqrt(len(mine) * len(theirs))
            else:
                s = 0.0
            sims.append((v, s))
        sims.sort(key=lambda t: (-t[1], t[0]))
        out.append([v for v, _ in sims[:k_nn]])
    return out


def brute_topk(scores: np.ndarray, k: int, masked=()) -> list[int]:
    """Top-k by score with ties broken by ascending index, as a sort."""
    banned = set(masked)
    order = sorted((i for i in range(len(scores)) if i not in banned),
                   key=lambda i: (-float(scores[i]), i))
    return order[:k]


def recount_hits(rows: dict, test: dict) -> dict:
    """Per-user (hits, held-out size, list size) from plain set arithmetic."""
    out = {}
    for u, held in test.items():
        recommended = {item for item, _ in rows[u]}
        out[u] = (len(recommended & set(held)), len(held), len(rows[u]))
    return out


def pairwise_auc(model, positives: list[tuple[int, int]],
                 negatives: list[tuple[int, int]]) -> float:
    """Fraction of (positive, negative) pairs the model orders correctly."""
    correct = 0
    total = 0
    for (u, i) in positives:
        s_pos = float(model.user_factors[u] @ model.item_factors[i])
        for (v, j) in negatives:
            if v != u:
                continue
            s_neg = float(model.user_factors[v] @ model.item_factors[j])
            total += 1
            if s_pos > s_neg:
                correct += 1
            elif s_pos == s_neg:
                correct += 0  # ties count as wrong; keeps the bar honest
    return correct / total if total else float("nan")


def random_hypergraph(rng: np.random.Generator, max_nodes: int = 50,
                      max_edges: int = 40):
    """Random incidence/weights for oracle comparisons.

    Returns ``(edge_member_sets, weights, num_nodes)``.  Every edge has at
    least two members; nodes not drawn into any edge stay isolated, which
    exercises the zero-degree convention.
    """
    n = int(rng.integers(4, max_nodes + 1))
    m = int(rng.integers(2, max_edges + 1))
    members = []
    weights = []
    for _ in range(m):
        size = int(rng.integers(2, min(n, 6) + 1))
        members.append(frozenset(int(v) for v in
                                 rng.choice(n, size=size, replace=False)))
        weights.append(float(rng.uniform(0.1, 3.0)))
    return members, weights, n


def incidence_array(members, num_nodes: int) -> np.ndarray:
    """Dense 0/1 node-by-edge membership matrix."""
    H = np.zeros((num_nodes, len(members)))
    for e, nodes in enumerate(members):
        for v in nodes:
            H[v, e] = 1.0
    return H
