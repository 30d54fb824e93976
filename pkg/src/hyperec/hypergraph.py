"""Hypergraph construction from interactions and recommender output.

Nodes are users and items in one index space: users occupy indices
``0 .. num_users-1`` and items occupy ``num_users .. num_users+num_items-1``.
Three hyperedge families are built:

* one edge per user joining the user with every train item
  (:func:`build_ui_edges`),
* one edge per user joining the user with its nearest neighbours by cosine
  similarity over train rows (:func:`build_uu_edges`),
* one edge per (model, user) joining the user with the model's top-k items
  for that user (:func:`build_model_edges`).

:func:`assemble` applies a weight policy and produces a :class:`Hypergraph`
holding the binary incidence matrix, per-edge weights, weighted node
degrees, and edge degrees.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .data import SplitDataset
from .errors import ConfigError, DataError

if TYPE_CHECKING:  # pragma: no cover
    from .ensemble import WeightPolicy
    from .recommenders import RankingList

logger = logging.getLogger(__name__)

KIND_UI = "UI"
KIND_UU = "UU"
_MODEL_PREFIX = "M:"


def model_kind(model_name: str) -> str:
    """Kind tag of a model hyperedge."""
    return _MODEL_PREFIX + model_name


def model_name_of(kind: str) -> str | None:
    """Inverse of :func:`model_kind`; None for non-model kinds."""
    return kind[len(_MODEL_PREFIX):] if kind.startswith(_MODEL_PREFIX) else None


@dataclass(frozen=True)
class Hyperedge:
    """A weighted set of node indices tagged with its family kind."""

    members: frozenset[int]
    kind: str
    weight: float = 1.0


@dataclass
class Hypergraph:
    """An assembled hypergraph over the joint user+item node space."""

    num_users: int
    num_items: int
    edges: tuple[Hyperedge, ...]
    incidence: sp.csr_matrix
    weights: np.ndarray
    node_degrees: np.ndarray
    edge_degrees: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def zero_degree_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.node_degrees == 0)

    def item_node(self, item: int) -> int:
        return self.num_users + item

    def edge_counts_by_kind(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for edge in self.edges:
            counts[edge.kind] = counts.get(edge.kind, 0) + 1
        return counts

    def same_structure(self, other: "Hypergraph") -> bool:
        """True when both hypergraphs are matrix-identical: same incidence,
        same weights, same edge kinds."""
        if (self.num_users, self.num_items, self.num_edges) != \
                (other.num_users, other.num_items, other.num_edges):
            return False
        if (self.incidence != other.incidence).nnz != 0:
            return False
        if not np.array_equal(self.weights, other.weights):
            return False
        return all(a.kind == b.kind for a, b in zip(self.edges, other.edges))


def from_edges(edges: Iterable[Hyperedge], num_users: int, num_items: int) -> Hypergraph:
    """Assemble a hypergraph from already-weighted edges.

    Validates the shared-node-space invariants: every edge has at least two
    members inside the node range and a positive weight.  Zero-degree nodes
    are permitted (items never interacted with nor recommended) and flagged.
    """
    edges = tuple(edges)
    num_nodes = num_users + num_items
    if num_nodes <= 0:
        raise DataError("hypergraph needs at least one node")
    if not edges:
        raise DataError("hypergraph needs at least one hyperedge")

    rows: list[int] = []
    cols: list[int] = []
    for e_idx, edge in enumerate(edges):
        if len(edge.members) < 2:
            raise DataError(
                f"hyperedge {e_idx} ({edge.kind}) has {len(edge.members)} member(s); "
                f"every hyperedge needs at least 2")
        if edge.weight <= 0 or not np.isfinite(edge.weight):
            raise ConfigError(
                f"hyperedge {e_idx} ({edge.kind}) has non-positive weight {edge.weight}")
        for node in edge.members:
            if not (0 <= node < num_nodes):
                raise DataError(
                    f"hyperedge {e_idx} ({edge.kind}) member {node} outside the "
                    f"{num_nodes}-node space")
            rows.append(node)
            cols.append(e_idx)

    data = np.ones(len(rows))
    incidence = sp.coo_matrix((data, (rows, cols)),
                              shape=(num_nodes, len(edges))).tocsr()
    weights = np.array([e.weight for e in edges], dtype=float)
    node_degrees = incidence @ weights
    edge_degrees = np.asarray(incidence.sum(axis=0)).ravel()

    hg = Hypergraph(num_users, num_items, edges, incidence, weights,
                    node_degrees, edge_degrees)
    isolated = hg.zero_degree_nodes
    if isolated.size:
        logger.info("hypergraph has %d zero-degree node(s)", isolated.size)
    return hg


def build_ui_edges(split: SplitDataset) -> list[Hyperedge]:
    """One edge per user: the user node plus every train item node."""
    train = split.train
    edges = []
    for u in split.users():
        items = train.items_of(u)
        if not items:
            raise DataError(
                f"user {train.user_ids[u]!r} has no train items; cannot build "
                f"its interaction hyperedge")
        members = frozenset({u} | {train.num_users + i for i in items})
        edges.append(Hyperedge(members, KIND_UI))
    return edges


def cosine_neighbors(split: SplitDataset, k_nn: int) -> np.ndarray:
    """Index matrix (num_users x k_nn) of nearest users by cosine similarity.

    Similarity is computed between binary train rows; all-zero rows have
    similarity 0 with everyone.  Self-similarity is excluded and ties break
    by ascending user index.
    """
    n_users = split.num_users
    if not (0 < k_nn < n_users):
        raise ConfigError(
            f"k_nn must be in 1..{n_users - 1} (one less than the retained "
            f"user count), got {k_nn}")
    Z = split.train.to_csr()
    # binary rows: cosine = |overlap| / sqrt(deg_u * deg_v).  Dividing the
    # integer overlap counts by the exact degree products keeps
    # mathematically tied similarities bitwise equal, so the index
    # tie-break below is deterministic in substance, not in float noise.
    counts = (Z @ Z.T).toarray().astype(float)
    degrees = np.asarray(Z.sum(axis=1)).ravel()
    scale = np.sqrt(np.outer(degrees, degrees))
    sims = np.divide(counts, scale, out=np.zeros_like(counts),
                     where=scale > 0)
    np.fill_diagonal(sims, -1.0)
    order = np.arange(n_users)
    out = np.empty((n_users, k_nn), dtype=np.int64)
    for u in range(n_users):
        ranked = np.lexsort((order, -sims[u]))
        out[u] = ranked[:k_nn]
    return out


def build_uu_edges(split: SplitDataset, k_nn: int = 10) -> list[Hyperedge]:
    """One edge per user: the user node plus its k_nn nearest user nodes."""
    neighbors = cosine_neighbors(split, k_nn)
    return [Hyperedge(frozenset({u, *map(int, neighbors[u])}), KIND_UU)
            for u in split.users()]


def build_model_edges(lists: Sequence["RankingList"],
                      num_users: int, num_items: int) -> list[Hyperedge]:
    """One edge per (model, user): the user node plus the model's top-k items.

    Models are processed in lexicographic name order so edge ordering is
    deterministic regardless of input order.
    """
    by_name: dict[str, "RankingList"] = {}
    for rl in lists:
        if rl.model_name in by_name:
            raise DataError(f"duplicate model name {rl.model_name!r} in rankings")
        by_name[rl.model_name] = rl

    user_sets = {name: set(rl.rows) for name, rl in by_name.items()}
    names = sorted(by_name)
    if names:
        reference = user_sets[names[0]]
        for name in names[1:]:
            if user_sets[name] != reference:
                raise DataError(
                    f"rankings for {name!r} cover a different user set than "
                    f"{names[0]!r}")

    edges = []
    for name in names:
        rl = by_name[name]
        kind = model_kind(name)
        for u in sorted(rl.rows):
            items = rl.items_of(u)
            bad = [i for i in items if not (0 <= i < num_items)]
            if bad:
                raise DataError(f"rankings for {name!r} reference item index {bad[0]} "
                                f"outside the {num_items}-item space")
            members = frozenset({u} | {num_users + i for i in items})
            edges.append(Hyperedge(members, kind))
    return edges


def assemble(ui_edges: Sequence[Hyperedge], uu_edges: Sequence[Hyperedge],
             model_edges: Sequence[Hyperedge], policy: "WeightPolicy",
             num_users: int, num_items: int) -> Hypergraph:
    """Apply a weight policy to the three edge families and build the graph."""
    weighted = [replace(edge, weight=policy.weight_for(edge.kind))
                for edge in (*ui_edges, *uu_edges, *model_edges)]
    return from_edges(weighted, num_users, num_items)


def save_hypergraph(hg: Hypergraph, path: str | Path) -> Path:
    """Persist a hypergraph as a plain-text sparse triplet file.

    Layout: one header line ``num_nodes num_edges num_users nnz``, then one
    ``node edge`` incidence pair per line, then one ``weight kind`` record
    per edge.
    """
    path = Path(path)
    coo = hg.incidence.tocoo()
    pairs = sorted(zip(coo.row.tolist(), coo.col.tolist()))
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"{hg.num_nodes} {hg.num_edges} {hg.num_users} {len(pairs)}\n")
        for node, edge in pairs:
            fh.write(f"{node} {edge}\n")
        for edge in hg.edges:
            fh.write(f"{edge.weight!r} {edge.kind}\n")
    return path


def load_hypergraph(path: str | Path) -> Hypergraph:
    """Load a hypergraph persisted by :func:`save_hypergraph`."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"hypergraph file not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    try:
        num_nodes, num_edges, num_users, nnz = map(int, lines[0].split())
    except (ValueError, IndexError):
        raise DataError(f"malformed hypergraph header in {path}") from None
    if len(lines) != 1 + nnz + num_edges:
        raise DataError(
            f"hypergraph file {path} holds {len(lines)} lines, expected "
            f"{1 + nnz + num_edges}")

    members: list[set[int]] = [set() for _ in range(num_edges)]
    for line in lines[1:1 + nnz]:
        try:
            node, edge = map(int, line.split())
        except ValueError:
            raise DataError(f"malformed incidence pair {line!r} in {path}") from None
        if not (0 <= node < num_nodes and 0 <= edge < num_edges):
            raise DataError(f"incidence pair {line!r} out of range in {path}")
        members[edge].add(node)

    edges = []
    for e_idx, line in enumerate(lines[1 + nnz:]):
        parts = line.split(maxsplit=1)
        if len(parts) != 2:
            raise DataError(f"malformed edge record {line!r} in {path}")
        edges.append(Hyperedge(frozenset(members[e_idx]), parts[1], float(parts[0])))
    return from_edges(edges, num_users, num_nodes - num_users)
