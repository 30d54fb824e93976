"""Interaction ingestion, ID indexing, and the holdout split protocol.

Interaction files are UTF-8 delimiter-separated rows of
``user_id,item_id[,rating[,timestamp]]``.  A header row is detected
automatically: the first row is treated as a header when any of its cells
matches a well-known column name (``user_id``, ``item``, ``rating``, ...)
or when every cell of the first row is non-numeric while the second row is
fully numeric.  Extra columns beyond the fourth are ignored.

The split protocol hides, per user, ``n_test`` interactions for testing and
``n_val`` further interactions for validation; users whose profiles cannot
support ``n_test + n_val + min_train`` interactions are dropped entirely and
the remaining users are re-indexed contiguously.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

_HEADER_TOKENS = {
    "user", "user_id", "userid", "uid",
    "item", "item_id", "itemid", "iid", "movie", "movie_id", "movieid",
    "rating", "score", "timestamp", "time", "date", "rank",
}

_DELIMITERS = {"csv": ",", "tsv": "\t"}


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


@dataclass
class InteractionDataset:
    """Binary user-item interactions with contiguous integer indices.

    ``user_ids`` and ``item_ids`` map index -> external ID in first-appearance
    order; ``interactions`` holds deduplicated ``(user_index, item_index)``
    pairs.  Instances are treated as immutable once constructed.
    """

    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    interactions: frozenset[tuple[int, int]]

    def __post_init__(self):
        if len(set(self.user_ids)) != len(self.user_ids):
            raise DataError("duplicate external user IDs in index")
        if len(set(self.item_ids)) != len(self.item_ids):
            raise DataError("duplicate external item IDs in index")
        for u, i in self.interactions:
            if not (0 <= u < len(self.user_ids)):
                raise DataError(f"interaction user index {u} out of range")
            if not (0 <= i < len(self.item_ids)):
                raise DataError(f"interaction item index {i} out of range")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "InteractionDataset":
        """Build a dataset from external ``(user_id, item_id)`` pairs.

        IDs are indexed by first appearance; duplicate pairs collapse.
        """
        users: dict[str, int] = {}
        items: dict[str, int] = {}
        inter: set[tuple[int, int]] = set()
        for user, item in pairs:
            u = users.setdefault(str(user), len(users))
            i = items.setdefault(str(item), len(items))
            inter.add((u, i))
        return cls(tuple(users), tuple(items), frozenset(inter))

    # -- basic shape ---------------------------------------------------

    @property
    def num_users(self) -> int:
        return len(self.user_ids)

    @property
    def num_items(self) -> int:
        return len(self.item_ids)

    @property
    def num_interactions(self) -> int:
        return len(self.interactions)

    @property
    def sparsity(self) -> float:
        """Fraction of filled cells in the user-item matrix."""
        cells = self.num_users * self.num_items
        return self.num_interactions / cells if cells else 0.0

    @cached_property
    def user_to_index(self) -> dict[str, int]:
        return {ext: idx for idx, ext in enumerate(self.user_ids)}

    @cached_property
    def item_to_index(self) -> dict[str, int]:
        return {ext: idx for idx, ext in enumerate(self.item_ids)}

    @cached_property
    def _by_user(self) -> dict[int, frozenset[int]]:
        acc: dict[int, set[int]] = {u: set() for u in range(self.num_users)}
        for u, i in self.interactions:
            acc[u].add(i)
        return {u: frozenset(s) for u, s in acc.items()}

    def items_of(self, user: int) -> frozenset[int]:
        """Item indices the given user interacted with."""
        try:
            return self._by_user[user]
        except KeyError:
            raise DataError(f"user index {user} out of range") from None

    def interaction_row(self, user: int) -> sp.csr_matrix:
        """Binary row vector (1 x num_items) of the user's interactions.

        A user without interactions yields an all-zero row; this is legal
        but flagged in the log.
        """
        items = sorted(self.items_of(user))
        if not items:
            logger.warning("user %r has an empty interaction row", self.user_ids[user])
        data = np.ones(len(items))
        indptr = np.array([0, len(items)])
        return sp.csr_matrix((data, np.array(items, dtype=np.int64), indptr),
                             shape=(1, self.num_items))

    @cached_property
    def _csr(self) -> sp.csr_matrix:
        if not self.interactions:
            return sp.csr_matrix((self.num_users, self.num_items))
        pairs = np.array(sorted(self.interactions), dtype=np.int64)
        data = np.ones(len(pairs))
        mat = sp.coo_matrix((data, (pairs[:, 0], pairs[:, 1])),
                            shape=(self.num_users, self.num_items))
        return mat.tocsr()

    def to_csr(self) -> sp.csr_matrix:
        """Full binary interaction matrix (num_users x num_items), CSR."""
        return self._csr

    def stats(self) -> dict:
        return {
            "num_users": self.num_users,
            "num_items": self.num_items,
            "num_interactions": self.num_interactions,
            "sparsity": self.sparsity,
        }

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return (f"InteractionDataset(users={self.num_users}, items={self.num_items}, "
                f"interactions={self.num_interactions}, sparsity={self.sparsity:.4f})")


def _detect_header(first: list[str], second: list[str] | None) -> bool:
    cells = [c.strip().lower() for c in first]
    if any(c in _HEADER_TOKENS for c in cells):
        return True
    if second is not None and all(not _is_number(c) for c in first) \
            and all(_is_number(c) for c in second):
        return True
    return False


def load_interactions(path: str | Path, fmt: str = "csv",
                      rating_threshold: float | None = None) -> InteractionDataset:
    """Load an interaction file into an indexed dataset.

    ``fmt`` is ``csv`` or ``tsv``.  When ``rating_threshold`` is given, rows
    carrying a third (rating) column count as interactions only when the
    rating is >= the threshold; otherwise every row counts.  Malformed rows
    raise :class:`DataError` with their line number.
    """
    if fmt not in _DELIMITERS:
        raise ConfigError(f"unknown interaction file format {fmt!r}; expected csv or tsv")
    path = Path(path)
    if not path.exists():
        raise DataError(f"interaction file not found: {path}")
    delim = _DELIMITERS[fmt]

    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = [(n, row) for n, row in enumerate(csv.reader(fh, delimiter=delim), start=1)
                if row and any(c.strip() for c in row)]
    if not rows:
        raise DataError(f"interaction file is empty: {path}")

    first = rows[0][1]
    second = rows[1][1] if len(rows) > 1 else None
    if _detect_header(first, second):
        rows = rows[1:]
        if not rows:
            raise DataError(f"interaction file holds a header but no data rows: {path}")

    pairs: list[tuple[str, str]] = []
    for lineno, row in rows:
        cells = [c.strip() for c in row]
        if len(cells) < 2 or not cells[0] or not cells[1]:
            raise DataError(f"{path}:{lineno}: expected at least user_id and item_id")
        if rating_threshold is not None and len(cells) >= 3:
            if not _is_number(cells[2]):
                raise DataError(f"{path}:{lineno}: non-numeric rating {cells[2]!r}")
            if float(cells[2]) < rating_threshold:
                continue
        pairs.append((cells[0], cells[1]))
    if not pairs:
        raise DataError(f"no interactions survived loading: {path}")

    ds = InteractionDataset.from_pairs(pairs)
    logger.info("loaded %s: %r", path, ds)
    return ds


def save_interactions(ds: InteractionDataset, path: str | Path, fmt: str = "csv",
                      header: bool = True) -> Path:
    """Write a dataset back out as a delimited interaction file."""
    if fmt not in _DELIMITERS:
        raise ConfigError(f"unknown interaction file format {fmt!r}; expected csv or tsv")
    path = Path(path)
    delim = _DELIMITERS[fmt]
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delim)
        if header:
            writer.writerow(["user_id", "item_id"])
        for u, i in sorted(ds.interactions):
            writer.writerow([ds.user_ids[u], ds.item_ids[i]])
    return path


@dataclass
class SplitDataset:
    """A train/validation/test partition of an interaction dataset.

    ``train`` is a re-indexed dataset over retained users (original item
    universe); ``validation`` and ``test`` map each retained user index to
    its held-out item sets.  The three parts of a user's profile are
    disjoint and reconstruct the profile exactly.
    """

    train: InteractionDataset
    validation: dict[int, frozenset[int]]
    test: dict[int, frozenset[int]]
    seed: int
    n_test: int
    n_val: int
    min_train: int
    dropped_users: tuple[str, ...] = field(default_factory=tuple)

    @property
    def num_users(self) -> int:
        return self.train.num_users

    @property
    def num_items(self) -> int:
        return self.train.num_items

    def users(self) -> range:
        return range(self.num_users)

    def full_profile(self, user: int) -> frozenset[int]:
        """The user's complete pre-split interaction set."""
        return self.train.items_of(user) | self.validation[user] | self.test[user]

    def stats(self) -> dict:
        return {
            "retained_users": self.num_users,
            "dropped_users": len(self.dropped_users),
            "train_interactions": self.train.num_interactions,
            "validation_interactions": sum(len(v) for v in self.validation.values()),
            "test_interactions": sum(len(t) for t in self.test.values()),
        }


def split(ds: InteractionDataset, n_test: int = 10, n_val: int = 5,
          min_train: int = 5, *, seed: int) -> SplitDataset:
    """Hide ``n_test`` + ``n_val`` random interactions per user.

    Users with fewer than ``n_test + n_val + min_train`` interactions are
    dropped entirely; retained users are re-indexed by original order.
    Deterministic for a fixed ``seed``.
    """
    for name, value in (("n_test", n_test), ("n_val", n_val), ("min_train", min_train)):
        if value < 0:
            raise ConfigError(f"{name} must be non-negative, got {value}")
    if n_test + n_val == 0:
        raise ConfigError("nothing held out: n_test + n_val must be positive")

    need = n_test + n_val + min_train
    rng = np.random.default_rng(seed)
    retained: list[str] = []
    dropped: list[str] = []
    train_pairs: list[tuple[int, int]] = []
    validation: dict[int, frozenset[int]] = {}
    test: dict[int, frozenset[int]] = {}

    for u in range(ds.num_users):
        items = sorted(ds.items_of(u))
        if len(items) < need:
            dropped.append(ds.user_ids[u])
            continue
        new_u = len(retained)
        retained.append(ds.user_ids[u])
        order = rng.permutation(len(items))
        shuffled = [items[p] for p in order]
        test[new_u] = frozenset(shuffled[:n_test])
        validation[new_u] = frozenset(shuffled[n_test:n_test + n_val])
        train_pairs.extend((new_u, i) for i in shuffled[n_test + n_val:])

    if not retained:
        raise DataError(
            f"no user has the {need} interactions required by the protocol "
            f"(n_test={n_test}, n_val={n_val}, min_train={min_train})")

    train = InteractionDataset(tuple(retained), ds.item_ids, frozenset(train_pairs))
    out = SplitDataset(train, validation, test, seed=seed, n_test=n_test,
                       n_val=n_val, min_train=min_train, dropped_users=tuple(dropped))
    logger.info("split: %s", out.stats())
    return out


def save_split(sd: SplitDataset, path: str | Path) -> Path:
    """Write a JSON manifest from which the split can be rebuilt.

    The manifest records the seed, protocol parameters, and per-user
    held-out item lists using external IDs.  Output is byte-stable for a
    given split.
    """
    path = Path(path)
    train = sd.train
    users = [
        {
            "user": train.user_ids[u],
            "test": sorted(train.item_ids[i] for i in sd.test[u]),
            "validation": sorted(train.item_ids[i] for i in sd.validation[u]),
        }
        for u in sd.users()
    ]
    manifest = {
        "seed": sd.seed,
        "n_test": sd.n_test,
        "n_val": sd.n_val,
        "min_train": sd.min_train,
        "dropped_users": list(sd.dropped_users),
        "users": users,
    }
    with path.open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_split(path: str | Path, ds: InteractionDataset) -> SplitDataset:
    """Rebuild a split from its manifest against the full dataset."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"split manifest not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"split manifest is not valid JSON: {path}: {exc}") from None

    try:
        entries = manifest["users"]
        n_test, n_val = manifest["n_test"], manifest["n_val"]
        min_train, seed = manifest["min_train"], manifest["seed"]
        dropped = tuple(manifest.get("dropped_users", ()))
    except KeyError as exc:
        raise DataError(f"split manifest missing key {exc} in {path}") from None

    retained: list[str] = []
    train_pairs: list[tuple[int, int]] = []
    validation: dict[int, frozenset[int]] = {}
    test: dict[int, frozenset[int]] = {}
    for entry in entries:
        ext_user = entry["user"]
        if ext_user not in ds.user_to_index:
            raise DataError(f"manifest user {ext_user!r} not present in dataset")
        profile = ds.items_of(ds.user_to_index[ext_user])
        new_u = len(retained)
        retained.append(ext_user)
        held: dict[str, frozenset[int]] = {}
        for part in ("test", "validation"):
            idxs = set()
            for ext_item in entry[part]:
                if ext_item not in ds.item_to_index:
                    raise DataError(f"manifest item {ext_item!r} not present in dataset")
                idx = ds.item_to_index[ext_item]
                if idx not in profile:
                    raise DataError(
                        f"manifest holds out {ext_item!r} which user {ext_user!r} "
                        f"never interacted with")
                idxs.add(idx)
            held[part] = frozenset(idxs)
        if len(held["test"]) != n_test or len(held["validation"]) != n_val:
            raise DataError(f"manifest user {ext_user!r} has wrong held-out sizes")
        if held["test"] & held["validation"]:
            raise DataError(f"manifest user {ext_user!r} has overlapping held-out sets")
        test[new_u] = held["test"]
        validation[new_u] = held["validation"]
        train_pairs.extend((new_u, i) for i in profile - held["test"] - held["validation"])

    train = InteractionDataset(tuple(retained), ds.item_ids, frozenset(train_pairs))
    return SplitDataset(train, validation, test, seed=seed, n_test=n_test,
                        n_val=n_val, min_train=min_train, dropped_users=dropped)
