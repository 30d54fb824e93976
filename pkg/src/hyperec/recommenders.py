"""Base top-k recommenders and the rankings interchange format.

Three latent-factor models are built in:

* pairwise sigmoid-loss SGD over sampled (user, seen, unseen) triplets
  (:func:`train_bpr`),
* rank-weighted pairwise hinge SGD with a capped negative-sampling budget
  (:func:`train_warp`),
* confidence-weighted alternating least squares on binary preferences
  (:func:`train_wrmf`).

All trainers are deterministic for a fixed seed on a single thread and all
score ties are broken by ascending item index.  :func:`rank_topk` turns a
factor model into per-user top-k lists with the user's train items masked,
and :func:`save_rankings` / :func:`load_external_rankings` move those lists
through the ``user_id,item_id,rank`` interchange file format so rankings
produced elsewhere can join the ensemble.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.linalg
from scipy.special import expit

from .data import InteractionDataset, SplitDataset
from .errors import ConfigError, DataError, NumericError

logger = logging.getLogger(__name__)

BPR_DEFAULTS: dict = {
    "iterations": 40,
    "factors": 32,
    "regularization": 0.01,
    "learning_rate": 0.05,
    "batch_size": 4096,
}

WARP_DEFAULTS: dict = {
    "iterations": 25,
    "factors": 32,
    "regularization": 1e-4,
    "learning_rate": 0.05,
    "max_trials": 50,
    "batch_size": 1024,
}

WRMF_DEFAULTS: dict = {
    "iterations": 15,
    "factors": 32,
    "regularization": 0.05,
    "alpha": 40.0,
}

_INIT_SCALE = 0.1


@dataclass
class FactorModel:
    """A trained latent-factor model plus its training trace."""

    user_factors: np.ndarray
    item_factors: np.ndarray
    hyperparams: dict
    name: str = ""
    training_log: list[float] = field(default_factory=list)

    @property
    def num_users(self) -> int:
        return self.user_factors.shape[0]

    @property
    def num_items(self) -> int:
        return self.item_factors.shape[0]

    def user_scores(self, user: int) -> np.ndarray:
        """Scores of every item for one user (dense, length num_items)."""
        return self.user_factors[user] @ self.item_factors.T

    def score_block(self, users: np.ndarray) -> np.ndarray:
        return self.user_factors[users] @ self.item_factors.T


@dataclass
class RankingList:
    """Per-user ranked top-k lists with scores.

    ``rows`` maps user index -> tuple of ``(item_index, score)`` in rank
    order.  Valid lists have exactly ``k`` distinct items per row,
    non-increasing scores, and no train items.
    """

    model_name: str
    k: int
    rows: dict[int, tuple[tuple[int, float], ...]]

    def users(self) -> list[int]:
        return sorted(self.rows)

    def items_of(self, user: int) -> list[int]:
        return [item for item, _ in self.rows[user]]

    def validate(self, split: SplitDataset) -> None:
        """Raise :class:`DataError` on any violated ranking invariant."""
        missing = [u for u in split.users() if u not in self.rows]
        if missing:
            raise DataError(
                f"rankings for {self.model_name!r} miss {len(missing)} user(s), "
                f"first missing index {missing[0]}")
        for u, row in self.rows.items():
            items = [item for item, _ in row]
            if len(items) != self.k or len(set(items)) != self.k:
                raise DataError(
                    f"rankings for {self.model_name!r}: user index {u} has "
                    f"{len(set(items))} distinct items, expected {self.k}")
            scores = [score for _, score in row]
            if any(not np.isfinite(s) for s in scores):
                raise DataError(
                    f"rankings for {self.model_name!r}: non-finite score for user {u}")
            if any(a < b for a, b in zip(scores, scores[1:])):
                raise DataError(
                    f"rankings for {self.model_name!r}: scores increase within "
                    f"user {u}'s row")
            leaked = set(items) & split.train.items_of(u)
            if leaked:
                raise DataError(
                    f"rankings for {self.model_name!r}: user index {u} row contains "
                    f"train item(s) {sorted(leaked)[:5]}")

    def same_items(self, other: "RankingList") -> bool:
        """True when both lists rank identical items in identical order."""
        if self.k != other.k or set(self.rows) != set(other.rows):
            return False
        return all(self.items_of(u) == other.items_of(u) for u in self.rows)


# ---------------------------------------------------------------------------
# training helpers

def _merge_hyperparams(defaults: dict, given: Mapping | None, model: str) -> dict:
    hp = dict(defaults)
    if given:
        unknown = set(given) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown {model} hyperparameter(s): {sorted(unknown)}")
        hp.update(given)
    for key in ("iterations", "factors"):
        if int(hp[key]) < 1:
            raise ConfigError(f"{model} hyperparameter {key} must be >= 1, got {hp[key]}")
        hp[key] = int(hp[key])
    return hp


def _train_arrays(train: InteractionDataset):
    """Positive pair arrays plus a dense membership mask for rejection sampling."""
    pairs = np.array(sorted(train.interactions), dtype=np.int64)
    if pairs.size == 0:
        raise DataError("cannot train on a dataset without interactions")
    mask = np.zeros((train.num_users, train.num_items), dtype=bool)
    mask[pairs[:, 0], pairs[:, 1]] = True
    if mask.all(axis=1).any():
        raise DataError("a user interacted with every item; no negatives to sample")
    return pairs[:, 0], pairs[:, 1], mask


def _sample_negatives(rng: np.random.Generator, users: np.ndarray,
                      mask: np.ndarray, num_items: int) -> np.ndarray:
    """Uniform negatives over each user's non-train items, by rejection."""
    neg = rng.integers(0, num_items, size=users.shape[0])
    bad = mask[users, neg]
    for _ in range(1000):
        if not bad.any():
            return neg
        neg[bad] = rng.integers(0, num_items, size=int(bad.sum()))
        bad = mask[users, neg]
    raise NumericError("negative sampling failed to find non-train items")


def _check_finite(model: str, hp: dict, *arrays: np.ndarray) -> None:
    for arr in arrays:
        if not np.isfinite(arr).all():
            raise NumericError(
                f"{model} training diverged (non-finite factors) with "
                f"hyperparameters {hp}")


def train_bpr(train: InteractionDataset, hyperparams: Mapping | None = None, *,
              seed: int, initial: FactorModel | None = None) -> FactorModel:
    """Pairwise sigmoid-loss SGD on sampled (user, seen, unseen) triplets.

    Each iteration samples ``num_interactions`` triplets (uniform over
    interactions; negatives uniform over the user's non-train items) and
    applies L2-regularized gradient steps.  ``training_log`` records the
    per-iteration sampled loss estimate.
    """
    hp = _merge_hyperparams(BPR_DEFAULTS, hyperparams, "bpr")
    rng = np.random.default_rng(seed)
    pos_u, pos_i, mask = _train_arrays(train)
    n_users, n_items = train.num_users, train.num_items
    d = hp["factors"]

    if initial is not None:
        U = initial.user_factors.astype(float).copy()
        V = initial.item_factors.astype(float).copy()
    else:
        U = rng.standard_normal((n_users, d)) * _INIT_SCALE
        V = rng.standard_normal((n_items, d)) * _INIT_SCALE

    lr, reg = float(hp["learning_rate"]), float(hp["regularization"])
    batch = int(hp["batch_size"])
    n_pairs = pos_u.shape[0]
    log: list[float] = []

    for _ in range(hp["iterations"]):
        picks = rng.integers(0, n_pairs, size=n_pairs)
        losses = 0.0
        # divergence shows up as inf/nan and is reported below; silence the
        # transient float warnings on the way there
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n_pairs, batch):
                sel = picks[start:start + batch]
                u, i = pos_u[sel], pos_i[sel]
                j = _sample_negatives(rng, u, mask, n_items)
                xu, vi, vj = U[u], V[i], V[j]
                x = np.einsum("nd,nd->n", xu, vi - vj)
                g = expit(-x)
                np.add.at(U, u, lr * (g[:, None] * (vi - vj) - reg * xu))
                np.add.at(V, i, lr * (g[:, None] * xu - reg * vi))
                np.add.at(V, j, lr * (-g[:, None] * xu - reg * vj))
                losses += float(np.logaddexp(0.0, -x).sum())
        epoch_loss = losses / n_pairs
        if not np.isfinite(epoch_loss):
            raise NumericError(f"bpr training diverged with hyperparameters {hp}")
        log.append(epoch_loss)

    _check_finite("bpr", hp, U, V)
    return FactorModel(U, V, hp, name="bpr", training_log=log)


def warp_rank_estimate(num_items: int, samples_drawn: int) -> int:
    """Rank estimate from the number of negatives drawn before a violation."""
    if samples_drawn < 1:
        raise ConfigError(f"samples_drawn must be >= 1, got {samples_drawn}")
    return (num_items - 1) // samples_drawn


def warp_loss_weight(rank: int) -> float:
    """Weight of a pairwise update at an estimated rank: sum_{j<=rank} 1/j."""
    if rank < 0:
        raise ConfigError(f"rank must be non-negative, got {rank}")
    return float(np.sum(1.0 / np.arange(1, rank + 1))) if rank else 0.0


def train_warp(train: InteractionDataset, hyperparams: Mapping | None = None, *,
               seed: int, initial: FactorModel | None = None) -> FactorModel:
    """Rank-weighted pairwise hinge SGD with a capped sampling budget.

    For each positive, negatives are drawn (uniform over the user's
    non-train items) until one violates the unit margin or ``max_trials``
    is exhausted; a violation after ``s`` draws yields an update weighted
    by :func:`warp_loss_weight` at rank ``(num_items - 1) // s``, while
    budget exhaustion yields no update for that positive.
    """
    hp = _merge_hyperparams(WARP_DEFAULTS, hyperparams, "warp")
    if int(hp["max_trials"]) < 1:
        raise ConfigError(f"warp max_trials must be >= 1, got {hp['max_trials']}")
    rng = np.random.default_rng(seed)
    pos_u, pos_i, mask = _train_arrays(train)
    n_users, n_items = train.num_users, train.num_items
    d = hp["factors"]

    if initial is not None:
        U = initial.user_factors.astype(float).copy()
        V = initial.item_factors.astype(float).copy()
    else:
        U = rng.standard_normal((n_users, d)) * _INIT_SCALE
        V = rng.standard_normal((n_items, d)) * _INIT_SCALE

    lr, reg = float(hp["learning_rate"]), float(hp["regularization"])
    batch = int(hp["batch_size"])
    max_trials = int(hp["max_trials"])
    n_pairs = pos_u.shape[0]
    harmonic = np.concatenate(([0.0], np.cumsum(1.0 / np.arange(1, n_items + 1))))
    log: list[float] = []

    for _ in range(hp["iterations"]):
        order = rng.permutation(n_pairs)
        losses = 0.0
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n_pairs, batch):
                sel = order[start:start + batch]
                u, i = pos_u[sel], pos_i[sel]
                xu = U[u]
                s_pos = np.einsum("nd,nd->n", xu, V[i])
                found = np.zeros(sel.shape[0], dtype=bool)
                j_sel = np.zeros(sel.shape[0], dtype=np.int64)
                drawn = np.ones(sel.shape[0], dtype=np.int64)
                for trial in range(max_trials):
                    j = _sample_negatives(rng, u, mask, n_items)
                    s_neg = np.einsum("nd,nd->n", xu, V[j])
                    viol = ~found & (s_neg > s_pos - 1.0)
                    j_sel[viol] = j[viol]
                    drawn[viol] = trial + 1
                    found |= viol
                    if found.all():
                        break
                if not found.any():
                    continue
                uu, ii, jj = u[found], i[found], j_sel[found]
                ranks = (n_items - 1) // drawn[found]
                w = harmonic[ranks]
                xu_f, vi, vj = U[uu], V[ii], V[jj]
                margin = 1.0 - np.einsum("nd,nd->n", xu_f, vi - vj)
                losses += float((w * np.maximum(margin, 0.0)).sum())
                wcol = w[:, None]
                np.add.at(U, uu, lr * (wcol * (vi - vj) - reg * xu_f))
                np.add.at(V, ii, lr * (wcol * xu_f - reg * vi))
                np.add.at(V, jj, lr * (-wcol * xu_f - reg * vj))
        epoch_loss = losses / n_pairs
        if not np.isfinite(epoch_loss):
            raise NumericError(f"warp training diverged with hyperparameters {hp}")
        log.append(epoch_loss)

    _check_finite("warp", hp, U, V)
    return FactorModel(U, V, hp, name="warp", training_log=log)


def wrmf_objective(train: InteractionDataset, user_factors: np.ndarray,
                   item_factors: np.ndarray, alpha: float, regularization: float) -> float:
    """Confidence-weighted squared reconstruction error plus L2 penalty.

    Evaluated over every user-item cell (confidence ``1 + alpha`` on
    interactions, 1 elsewhere); intended for desk-scale diagnostics.
    """
    prefs = train.to_csr().toarray()
    conf = 1.0 + alpha * prefs
    pred = user_factors @ item_factors.T
    err = float((conf * (prefs - pred) ** 2).sum())
    penalty = regularization * (float((user_factors ** 2).sum())
                                + float((item_factors ** 2).sum()))
    return err + penalty


def _als_half(mat, other: np.ndarray, alpha: float, reg: float) -> np.ndarray:
    """Solve one ALS side: new factors for the rows of ``mat`` given ``other``."""
    d = other.shape[1]
    gram = other.T @ other + reg * np.eye(d)
    out = np.zeros((mat.shape[0], d))
    indptr, indices = mat.indptr, mat.indices
    for r in range(mat.shape[0]):
        cols = indices[indptr[r]:indptr[r + 1]]
        if cols.size == 0:
            continue
        sub = other[cols]
        lhs = gram + alpha * (sub.T @ sub)
        rhs = (1.0 + alpha) * sub.sum(axis=0)
        try:
            # the system is symmetric positive definite whenever reg > 0, and
            # Cholesky also flags the reg=0 rank-deficient case reliably
            out[r] = scipy.linalg.cho_solve(
                scipy.linalg.cho_factor(lhs, check_finite=False), rhs,
                check_finite=False)
        except scipy.linalg.LinAlgError:
            raise NumericError(
                "singular normal equations in alternating least squares "
                f"(regularization={reg}); increase regularization") from None
    return out


def train_wrmf(train: InteractionDataset, hyperparams: Mapping | None = None, *,
               seed: int, initial: FactorModel | None = None,
               track_objective: bool = True) -> FactorModel:
    """Confidence-weighted ALS on binary preferences.

    Interactions carry confidence ``1 + alpha``; each alternation solves
    the user side then the item side exactly, so the tracked objective is
    non-increasing across alternations.
    """
    hp = _merge_hyperparams(WRMF_DEFAULTS, hyperparams, "wrmf")
    alpha, reg = float(hp["alpha"]), float(hp["regularization"])
    if alpha <= 0:
        raise ConfigError(f"wrmf alpha must be positive, got {alpha}")
    if reg < 0:
        raise ConfigError(f"wrmf regularization must be non-negative, got {reg}")
    rng = np.random.default_rng(seed)
    d = hp["factors"]
    Z = train.to_csr()
    Zt = Z.T.tocsr()

    if initial is not None:
        U = initial.user_factors.astype(float).copy()
        V = initial.item_factors.astype(float).copy()
    else:
        U = np.zeros((train.num_users, d))
        V = rng.standard_normal((train.num_items, d)) * _INIT_SCALE

    cells = train.num_users * train.num_items
    track = track_objective and cells <= 20_000_000
    log: list[float] = []
    for _ in range(hp["iterations"]):
        U = _als_half(Z, V, alpha, reg)
        V = _als_half(Zt, U, alpha, reg)
        if track:
            log.append(wrmf_objective(train, U, V, alpha, reg))

    _check_finite("wrmf", hp, U, V)
    return FactorModel(U, V, hp, name="wrmf", training_log=log)


TRAINERS = {"bpr": train_bpr, "warp": train_warp, "wrmf": train_wrmf}
DEFAULT_HYPERPARAMS = {"bpr": BPR_DEFAULTS, "warp": WARP_DEFAULTS, "wrmf": WRMF_DEFAULTS}


# ---------------------------------------------------------------------------
# ranking and interchange

def topk_row(scores: np.ndarray, k: int, masked: frozenset[int] | set[int]) -> list[int]:
    """Top-k item indices by descending score, ties ascending index."""
    s = scores.astype(float, copy=True)
    if masked:
        s[sorted(masked)] = -np.inf
    order = np.lexsort((np.arange(s.shape[0]), -s))
    return [int(i) for i in order[:k]]


def rank_topk(model: FactorModel, split: SplitDataset, k: int = 10,
              model_name: str | None = None, block_size: int = 512) -> RankingList:
    """Per-user top-k lists from a factor model, train items masked."""
    train = split.train
    if model.num_users != train.num_users or model.num_items != train.num_items:
        raise DataError(
            f"factor model shape ({model.num_users}x{model.num_items}) does not "
            f"match split ({train.num_users}x{train.num_items})")
    max_degree = max((len(train.items_of(u)) for u in split.users()), default=0)
    if k > train.num_items - max_degree:
        raise DataError(
            f"k={k} exceeds the {train.num_items - max_degree} unmasked items "
            f"available to the densest user")

    name = model_name if model_name is not None else (model.name or "model")
    rows: dict[int, tuple[tuple[int, float], ...]] = {}
    users = np.arange(train.num_users)
    for start in range(0, train.num_users, block_size):
        blk = users[start:start + block_size]
        scores = model.score_block(blk)
        for offset, u in enumerate(blk):
            row = scores[offset]
            top = topk_row(row, k, train.items_of(int(u)))
            rows[int(u)] = tuple((i, float(row[i])) for i in top)
    return RankingList(name, k, rows)


def save_rankings(lists: RankingList, dataset: InteractionDataset,
                  path: str | Path) -> Path:
    """Write rankings as ``user_id,item_id,rank`` (rank 1..k) with header."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "item_id", "rank"])
        for u in lists.users():
            for rank, (item, _) in enumerate(lists.rows[u], start=1):
                writer.writerow([dataset.user_ids[u], dataset.item_ids[item], rank])
    return path


def _resolve_column(header: list[str] | None, groups: dict, k: int, column: str) -> str:
    if column in ("rank", "score"):
        return column
    if column != "auto":
        raise ConfigError(f"unknown rankings column mode {column!r}")
    if header is not None:
        name = header[2].strip().lower()
        if name in ("rank", "score"):
            return name
    expected = set(range(1, k + 1))
    for rows in groups.values():
        values = [v for _, v in rows]
        if any(not float(v).is_integer() for v in values) \
                or {int(v) for v in values} != expected:
            return "score"
    return "rank"


def load_external_rankings(path: str | Path, split: SplitDataset, k: int,
                           model_name: str | None = None,
                           column: str = "auto", fmt: str = "csv") -> RankingList:
    """Load and validate a rankings file produced by any recommender.

    The third column holds either ranks 1..k or raw scores (``column`` may
    force the interpretation; ``auto`` sniffs the header and values).
    Unknown IDs, wrong per-user row counts, missing users, and train-item
    leakage all raise :class:`DataError`.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"rankings file not found: {path}")
    delim = {"csv": ",", "tsv": "\t"}.get(fmt)
    if delim is None:
        raise ConfigError(f"unknown rankings file format {fmt!r}")
    name = model_name if model_name is not None else path.stem.removeprefix("rankings_")
    train = split.train

    with path.open("r", encoding="utf-8", newline="") as fh:
        raw = [(n, row) for n, row in enumerate(csv.reader(fh, delimiter=delim), start=1)
               if row and any(c.strip() for c in row)]
    if not raw:
        raise DataError(f"rankings file is empty: {path}")

    header: list[str] | None = None
    first = [c.strip() for c in raw[0][1]]
    if len(first) >= 3 and not _is_number_triple(first):
        header = first
        raw = raw[1:]

    groups: dict[int, list[tuple[int, float]]] = {}
    seen: set[tuple[int, int]] = {*()}
    for lineno, row in raw:
        cells = [c.strip() for c in row]
        if len(cells) < 3:
            raise DataError(f"{path}:{lineno}: expected user_id,item_id,rank-or-score")
        ext_u, ext_i, value = cells[0], cells[1], cells[2]
        if ext_u not in train.user_to_index:
            raise DataError(f"{path}:{lineno}: unknown user ID {ext_u!r}")
        if ext_i not in train.item_to_index:
            raise DataError(f"{path}:{lineno}: unknown item ID {ext_i!r}")
        try:
            val = float(value)
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric column {value!r}") from None
        if not np.isfinite(val):
            raise DataError(f"{path}:{lineno}: non-finite column {value!r}")
        u, i = train.user_to_index[ext_u], train.item_to_index[ext_i]
        if (u, i) in seen:
            raise DataError(f"{path}:{lineno}: duplicate entry for user {ext_u!r}, "
                            f"item {ext_i!r}")
        seen.add((u, i))
        groups.setdefault(u, []).append((i, val))

    for u, entries in groups.items():
        if len(entries) != k:
            raise DataError(
                f"{path}: user {train.user_ids[u]!r} has {len(entries)} entries, "
                f"expected exactly {k}")
    missing = [u for u in split.users() if u not in groups]
    if missing:
        raise DataError(
            f"{path}: no rankings for {len(missing)} retained user(s), e.g. "
            f"{train.user_ids[missing[0]]!r}")

    mode = _resolve_column(header, groups, k, column)
    rows: dict[int, tuple[tuple[int, float], ...]] = {}
    for u, entries in groups.items():
        if mode == "rank":
            ranks = sorted(int(v) for _, v in entries)
            if ranks != list(range(1, k + 1)):
                raise DataError(
                    f"{path}: user {train.user_ids[u]!r} ranks are not exactly 1..{k}")
            ordered = sorted(entries, key=lambda e: e[1])
            rows[u] = tuple((i, float(k - pos)) for pos, (i, _) in enumerate(ordered))
        else:
            ordered = sorted(entries, key=lambda e: (-e[1], e[0]))
            rows[u] = tuple((i, v) for i, v in ordered)

    out = RankingList(name, k, rows)
    out.validate(split)
    return out


def _is_number_triple(cells: list[str]) -> bool:
    try:
        float(cells[2])
    except ValueError:
        return False
    return True


def save_factors(model: FactorModel, path: str | Path) -> Path:
    """Persist a factor model as an .npz archive."""
    path = Path(path)
    np.savez(path, user_factors=model.user_factors, item_factors=model.item_factors,
             hyperparams=json.dumps(model.hyperparams, sort_keys=True),
             name=model.name, training_log=np.array(model.training_log))
    return path


def load_factors(path: str | Path) -> FactorModel:
    """Load a factor model persisted by :func:`save_factors`."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"factor file not found: {path}")
    with np.load(path, allow_pickle=False) as blob:
        return FactorModel(
            user_factors=blob["user_factors"],
            item_factors=blob["item_factors"],
            hyperparams=json.loads(str(blob["hyperparams"])),
            name=str(blob["name"]),
            training_log=[float(x) for x in blob["training_log"]],
        )
