"""Undo label switching in a stream of fixed-G membership samples.

Each incoming sample is permuted to minimise its disagreement with all
samples relabelled so far. Disagreement is read off running counts
``r[n, g]`` (how often item ``n`` has been in group ``g``), so each step
costs O(N G + G^3) however long the history.

Permutations are integer arrays ``perm`` with ``perm[old] = new``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass
class RunningCounts:
    r: np.ndarray
    t_seen: int = 0

    @classmethod
    def empty(cls, n_items: int, g: int) -> "RunningCounts":
        return cls(np.zeros((n_items, g), dtype=np.int64), 0)

    @property
    def g(self) -> int:
        return self.r.shape[1]

    def add(self, z) -> None:
        self.r[np.arange(self.r.shape[0]), np.asarray(z)] += 1
        self.t_seen += 1


def build_cost(rc: RunningCounts, z_new) -> np.ndarray:
    """``C[g, h] = sum_n (t_seen - r[n, g]) * [z_new[n] == h]``.

    Entry ``(g, h)`` counts past disagreements incurred by calling the
    new sample's group ``h`` by the old label ``g``.
    """
    z_new = np.asarray(z_new, dtype=np.int64)
    g = rc.g
    onehot = np.zeros((z_new.size, g), dtype=np.int64)
    onehot[np.arange(z_new.size), z_new] = 1
    return (rc.t_seen - rc.r).T @ onehot


def _is_integral(cost) -> bool:
    return np.issubdtype(cost.dtype, np.integer) or bool(np.all(cost == np.round(cost)))


def solve_assignment(cost) -> np.ndarray:
    """Column ``delta[g]`` minimising ``sum_g cost[g, delta[g]]``.

    Ties go to the identity: for integer costs the objective is scaled by
    ``G + 1`` and one unit is refunded per fixed point, which orders equal
    cost assignments by how many labels they leave alone without reordering
    unequal ones. For real costs the identity is returned whenever it is
    optimal.
    """
    cost = np.asarray(cost)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError("cost matrix must be square")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix must be finite")
    g = cost.shape[0]
    if _is_integral(cost) and np.abs(cost).max(initial=0) < 2**52 / (g + 1) / max(g, 1):
        work = cost.astype(np.int64) * (g + 1) - np.eye(g, dtype=np.int64)
        _, cols = linear_sum_assignment(work)
        return cols.astype(np.int64)
    _, cols = linear_sum_assignment(cost)
    ident = np.arange(g)
    if np.trace(cost) <= cost[ident, cols].sum():
        return ident
    return cols.astype(np.int64)


def relabel_permutation(cost) -> np.ndarray:
    """Map ``perm[h] = g`` sending new label ``h`` to the old label it is assigned."""
    delta = solve_assignment(cost)
    perm = np.empty_like(delta)
    perm[delta] = np.arange(delta.size)
    return perm


def relabel_stream(samples, g):
    """Relabel a stream of membership samples against its own history.

    Parameters
    ----------
    samples : array (T, N) of 0-based labels
    g : int or sequence of int
        Number of groups; a per-sample sequence must be constant.

    Returns
    -------
    relabelled : array (T, N)
    perms : array (T, G)
        ``relabelled[t] = perms[t][samples[t]]``; ``perms[0]`` is the identity.
    """
    samples = np.asarray(samples, dtype=np.int64)
    if samples.ndim != 2:
        raise ValueError("samples must be a T x N array")
    if not np.isscalar(g):
        gs = np.unique(np.asarray(g))
        if gs.size != 1:
            raise ValueError(f"relabelling needs a single G, got {gs.tolist()}")
        g = int(gs[0])
    g = int(g)
    if samples.size and (samples.min() < 0 or samples.max() >= g):
        raise ValueError(f"labels must lie in 0..{g - 1}")
    t_total, n = samples.shape
    out = np.empty_like(samples)
    perms = np.empty((t_total, g), dtype=np.int64)
    rc = RunningCounts.empty(n, g)
    for t in range(t_total):
        perm = relabel_permutation(build_cost(rc, samples[t])) if t else np.arange(g)
        out[t] = perm[samples[t]]
        perms[t] = perm
        rc.add(out[t])
    return out, perms


def permute_snapshot(sizes, counts, perm):
    """Apply ``perm`` (old -> new) to a ``(N_g, N_gmc)`` snapshot."""
    perm = np.asarray(perm)
    new_sizes = np.empty_like(sizes)
    new_counts = np.empty_like(counts)
    new_sizes[perm] = sizes
    new_counts[perm] = counts
    return new_sizes, new_counts


def relabel_snapshots(snapshots: Sequence, perms) -> list:
    return [permute_snapshot(s, c, p) for (s, c), p in zip(snapshots, perms)]
