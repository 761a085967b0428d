"""Count tables behind the collapsed posterior.

Categories of all variables are laid end to end on one axis of length
``sum(C_m)``; variable ``m`` owns columns ``offsets[m] : offsets[m] + C_m``.
Group labels are 0-based in memory.
"""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from .dataset import CategoricalDataset


class ConsistencyError(RuntimeError):
    """A count table would become negative or lost track of its items."""


class SuffStats:
    """Group sizes ``N_g``, group/category counts ``N_gmc`` and marginals ``N_mc``.

    ``N_gmc`` is kept for every variable, included in the clustering or not,
    so that a variable inclusion proposal needs no pass over the data.
    Rows beyond ``g`` are spare capacity and always zero.
    """

    __slots__ = ("group_sizes", "group_var_cat", "marginal_var_cat",
                 "categories", "offsets", "g")

    def __init__(self, group_sizes, group_var_cat, marginal_var_cat, categories, g):
        self.group_sizes = np.asarray(group_sizes, dtype=np.int64)
        self.group_var_cat = np.asarray(group_var_cat, dtype=np.int64)
        self.marginal_var_cat = np.asarray(marginal_var_cat, dtype=np.int64)
        self.categories = tuple(int(c) for c in categories)
        self.offsets = np.concatenate([[0], np.cumsum(self.categories)[:-1]]).astype(np.int64)
        self.g = int(g)

    @classmethod
    def empty(cls, categories, g, capacity=None):
        """Tables for a dataset with no items (all counts zero)."""
        cap = max(int(capacity or g), int(g))
        total = int(sum(categories))
        return cls(np.zeros(cap, np.int64), np.zeros((cap, total), np.int64),
                   np.zeros(total, np.int64), categories, g)

    @property
    def n_items(self) -> int:
        return int(self.marginal_var_cat[:self.categories[0]].sum())

    @property
    def capacity(self) -> int:
        return self.group_sizes.shape[0]

    def copy(self) -> "SuffStats":
        out = object.__new__(SuffStats)
        out.group_sizes = self.group_sizes.copy()
        out.group_var_cat = self.group_var_cat.copy()
        out.marginal_var_cat = self.marginal_var_cat
        out.categories = self.categories
        out.offsets = self.offsets
        out.g = self.g
        return out

    def reserve(self, capacity: int) -> None:
        extra = capacity - self.capacity
        if extra > 0:
            self.group_sizes = np.concatenate([self.group_sizes, np.zeros(extra, np.int64)])
            self.group_var_cat = np.vstack(
                [self.group_var_cat, np.zeros((extra, self.group_var_cat.shape[1]), np.int64)])

    def active(self):
        """Views ``(N_g, N_gmc)`` restricted to the ``g`` live groups."""
        return self.group_sizes[:self.g], self.group_var_cat[:self.g]

    def var_slice(self, m: int) -> slice:
        return slice(self.offsets[m], self.offsets[m] + self.categories[m])

    def permute(self, perm) -> None:
        """Relabel groups in place: old group ``h`` becomes ``perm[h]``."""
        perm = np.asarray(perm)
        sizes, counts = self.active()
        new_sizes = np.empty_like(sizes)
        new_counts = np.empty_like(counts)
        new_sizes[perm] = sizes
        new_counts[perm] = counts
        sizes[:] = new_sizes
        counts[:] = new_counts

    def check(self) -> None:
        """Assert the marginal identities; raise ConsistencyError otherwise."""
        sizes, counts = self.active()
        if (self.group_sizes < 0).any() or (self.group_var_cat < 0).any():
            raise ConsistencyError("negative count")
        if self.group_sizes[self.g:].any() or self.group_var_cat[self.g:].any():
            raise ConsistencyError("spare rows are not empty")
        n = self.n_items
        if sizes.sum() != n:
            raise ConsistencyError("group sizes do not sum to N")
        per_var = np.add.reduceat(counts, self.offsets, axis=1)
        if not (per_var == sizes[:, None]).all():
            raise ConsistencyError("category counts do not sum to group sizes")
        if not (counts.sum(axis=0) == self.marginal_var_cat).all():
            raise ConsistencyError("group counts do not sum to marginal counts")

    def __eq__(self, other):
        if not isinstance(other, SuffStats):
            return NotImplemented
        return (self.g == other.g and self.categories == other.categories
                and np.array_equal(self.group_sizes[:self.g], other.group_sizes[:other.g])
                and np.array_equal(self.group_var_cat[:self.g], other.group_var_cat[:other.g])
                and np.array_equal(self.marginal_var_cat, other.marginal_var_cat))

    def __repr__(self):
        return f"SuffStats(g={self.g}, N_g={self.group_sizes[:self.g].tolist()})"


def _codes(data) -> np.ndarray:
    if isinstance(data, CategoricalDataset):
        return data.flat_codes()
    return np.asarray(data)


def build(data: CategoricalDataset, z, g: int, capacity: Optional[int] = None) -> SuffStats:
    """Tally counts directly from the data for 0-based labels ``z``.

    Raises
    ------
    ValueError
        If any label lies outside ``0 .. g-1``.
    """
    z = np.asarray(z, dtype=np.int64)
    if z.shape != (data.n_items,):
        raise ValueError(f"need {data.n_items} labels, got shape {z.shape}")
    if z.size and (z.min() < 0 or z.max() >= g):
        raise ValueError(f"labels must lie in 0..{g - 1}")
    cap = max(int(capacity or g), g)
    codes = data.flat_codes()
    total = data.total_categories
    sizes = np.bincount(z, minlength=cap)
    counts = np.zeros((cap, total), np.int64)
    np.add.at(counts, (np.repeat(z, data.n_vars), codes.ravel()), 1)
    marginal = np.bincount(codes.ravel(), minlength=total)
    return SuffStats(sizes, counts, marginal, data.categories, g)


def move_item(stats: SuffStats, data, n: int, from_: int, to: int) -> None:
    """Move item ``n`` from group ``from_`` to group ``to`` in O(M)."""
    if from_ == to:
        return
    row = _codes(data)[n]
    if stats.group_sizes[from_] < 1 or (stats.group_var_cat[from_, row] < 1).any():
        raise ConsistencyError(f"item {n} is not counted in group {from_}")
    stats.group_sizes[from_] -= 1
    stats.group_var_cat[from_, row] -= 1
    stats.group_sizes[to] += 1
    stats.group_var_cat[to, row] += 1


def split_counts(stats: SuffStats, data, members: Iterable[int], from_: int, z=None) -> SuffStats:
    """Counts after moving ``members`` of group ``from_`` into a new group ``g``.

    The input tables are left untouched. If ``z`` is supplied, membership
    of every item in ``from_`` is verified against it.
    """
    members = np.asarray(list(members) if not isinstance(members, np.ndarray) else members,
                         dtype=np.int64)
    if z is not None and members.size and (np.asarray(z)[members] != from_).any():
        raise ValueError(f"some items are not members of group {from_}")
    moved = np.bincount(_codes(data)[members].ravel(), minlength=stats.group_var_cat.shape[1])
    out = stats.copy()
    out.reserve(stats.g + 1)
    new = stats.g
    out.group_sizes[from_] -= members.size
    out.group_var_cat[from_] -= moved
    if out.group_sizes[from_] < 0 or (out.group_var_cat[from_] < 0).any():
        raise ValueError(f"some items are not members of group {from_}")
    out.group_sizes[new] = members.size
    out.group_var_cat[new] = moved
    out.g = stats.g + 1
    return out


def merge_counts(stats: SuffStats, src: int, dst: int) -> SuffStats:
    """Counts after absorbing group ``src`` into ``dst``.

    The last group takes over the vacated label ``src`` so labels stay
    contiguous; this matches the relabelling the sampler applies to ``z``.
    """
    if src == dst:
        raise ValueError("cannot absorb a group into itself")
    out = stats.copy()
    last = stats.g - 1
    out.group_sizes[dst] += out.group_sizes[src]
    out.group_var_cat[dst] += out.group_var_cat[src]
    if src != last:
        out.group_sizes[src] = out.group_sizes[last]
        out.group_var_cat[src] = out.group_var_cat[last]
    out.group_sizes[last] = 0
    out.group_var_cat[last] = 0
    out.g = stats.g - 1
    return out
