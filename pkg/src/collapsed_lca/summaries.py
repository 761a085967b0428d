"""Posterior summaries of a trans-dimensional trace, partition agreement and
chain diagnostics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class GroupPosterior:
    """``p[k - 1]`` is the fraction of retained sweeps with ``k`` groups."""

    p: np.ndarray
    counts: np.ndarray

    @property
    def g_max(self) -> int:
        return self.p.size

    def mode(self) -> int:
        return int(np.argmax(self.counts)) + 1


@dataclass(frozen=True)
class CoincidenceMatrix:
    """``c[k - 1, m]``: inclusion frequency of variable ``m`` among sweeps with ``k`` groups.

    Rows with ``visited[k - 1] == False`` hold NaN.
    """

    c: np.ndarray
    visited: np.ndarray


def _g_values(trace) -> np.ndarray:
    return np.asarray(trace.g if hasattr(trace, "g") else trace, dtype=np.int64)


def group_posterior(trace, g_max: Optional[int] = None) -> GroupPosterior:
    g = _g_values(trace)
    if g.size == 0:
        raise ValueError("empty trace")
    g_max = int(g_max or getattr(trace, "g_max", g.max()))
    if g.min() < 1 or g.max() > g_max:
        raise ValueError(f"G values must lie in 1..{g_max}")
    counts = np.bincount(g - 1, minlength=g_max)
    return GroupPosterior(counts / g.size, counts)


def coincidence(trace, included=None, g_max: Optional[int] = None) -> CoincidenceMatrix:
    """Conditional inclusion frequencies per number of groups.

    ``trace`` may be a Trace, or a G sequence with ``included`` the matching
    T x M 0/1 matrix.
    """
    g = _g_values(trace)
    inc = np.asarray(trace.inclusion_matrix() if included is None else included, dtype=float)
    if g.size == 0:
        raise ValueError("empty trace")
    if inc.shape[0] != g.size:
        raise ValueError("G sequence and inclusion matrix disagree in length")
    g_max = int(g_max or getattr(trace, "g_max", g.max()))
    visits = np.bincount(g - 1, minlength=g_max).astype(float)
    hits = np.zeros((g_max, inc.shape[1]))
    np.add.at(hits, g - 1, inc)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = hits / visits[:, None]
    visited = visits > 0
    c[~visited] = np.nan
    return CoincidenceMatrix(c, visited)


def rand_index(a, b) -> float:
    """Plain Rand index: share of item pairs on which two partitions agree.

    Computed from the contingency table in O(N + K_a K_b). With fewer than
    two items there are no pairs and the value is 1.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"partitions differ in length: {a.shape} vs {b.shape}")
    n = a.size
    if n < 2:
        return 1.0
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)

    def pairs(x):
        x = x.astype(np.int64)
        return int((x * (x - 1) // 2).sum())

    total = n * (n - 1) // 2
    together_both = pairs(table)
    agree = total + 2 * together_both - pairs(table.sum(axis=1)) - pairs(table.sum(axis=0))
    return agree / total


def agreement(a, b) -> int:
    """Largest number of items on which ``a`` and ``b`` coincide under a one-to-one label matching."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"partitions differ in length: {a.shape} vs {b.shape}")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max(initial=-1) + 1, ib.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return int(table[rows, cols].sum())


@dataclass(frozen=True)
class Diagnostics:
    acf: np.ndarray
    ess: float
    degenerate: bool

    def to_dict(self, max_lag: int = 50) -> dict:
        return {"acf": [float(v) for v in self.acf[1:max_lag + 1]],
                "ess": float(self.ess), "degenerate": self.degenerate}


def autocorrelation(x) -> np.ndarray:
    """Sample autocorrelation at lags ``0 .. T-1`` (biased estimator, via FFT)."""
    x = np.asarray(x, dtype=float)
    t = x.size
    d = x - x.mean()
    size = 1 << (2 * t - 1).bit_length()
    f = np.fft.rfft(d, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:t]
    return acov / acov[0]


def autocorr_ess(series, max_lag: int = 50) -> Diagnostics:
    """Autocorrelations and effective sample size of a scalar chain.

    ESS is ``T / (1 + 2 sum_l rho_l)``, summing from lag 1 up to (not
    including) the first lag whose autocorrelation is not positive. A
    constant series has ``ESS = T`` and ``degenerate`` set.
    """
    x = np.asarray(series, dtype=float)
    t = x.size
    if t < 2:
        raise ValueError("need at least two values")
    if np.all(x == x[0]):
        acf = np.full(max_lag + 1, np.nan)
        acf[0] = 1.0
        return Diagnostics(acf, float(t), True)
    rho = autocorrelation(x)
    nonpos = np.flatnonzero(rho[1:] <= 0)
    stop = nonpos[0] + 1 if nonpos.size else t
    ess = t / (1.0 + 2.0 * rho[1:stop].sum())
    acf = np.full(max_lag + 1, np.nan)
    k = min(max_lag + 1, t)
    acf[:k] = rho[:k]
    return Diagnostics(acf, float(ess), False)


def modal_model(trace):
    """Modal G and, among sweeps at that G, the most frequent inclusion mask.

    Returns ``(g, variables)`` with 0-based variable indices. Ties go to the smaller G and to the mask seen first.
    """
    gp = group_posterior(trace)
    g = gp.mode()
    inc = trace.inclusion_matrix()[trace.g_array() == g]
    masks, first, counts = np.unique(inc, axis=0, return_index=True, return_counts=True)
    best = max(range(len(masks)), key=lambda i: (counts[i], -first[i]))
    return g, np.flatnonzero(masks[best]).tolist()


def _nan_to_none(v):
    return None if isinstance(v, float) and math.isnan(v) else v


def diagnostics(trace, max_lag: int = 50) -> dict:
    """Diagnostics of the log posterior and G series plus move acceptance rates."""
    out = {}
    for key, series in (("log_posterior", trace.log_posterior), ("g", trace.g)):
        if len(series) >= 2:
            d = autocorr_ess(series, max_lag).to_dict(max_lag)
            d["acf"] = [_nan_to_none(v) for v in d["acf"]]
            out[key] = d
        else:
            out[key] = {"acf": [], "ess": None, "degenerate": True}
    out["acceptance"] = {k: (a / p if p else None) for k, (p, a) in trace.accept_counts.items()}
    out["proposals"] = {k: {"proposed": int(p), "accepted": int(a)}
                        for k, (p, a) in trace.accept_counts.items()}
    out["n_samples"] = len(trace.g)
    return out


def write_gprobs(path, gp: GroupPosterior) -> None:
    with open(path, "w") as fh:
        json.dump({str(k + 1): float(p) for k, p in enumerate(gp.p)}, fh, indent=2)
        fh.write("\n")


def write_coincidence(path, cm: CoincidenceMatrix, names: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["g", *names])
        for k, (row, seen) in enumerate(zip(cm.c, cm.visited)):
            w.writerow([k + 1, *([repr(float(v)) for v in row] if seen else [""] * len(names))])


def write_diagnostics(path, diag: dict) -> None:
    with open(path, "w") as fh:
        json.dump(diag, fh, indent=2)
        fh.write("\n")


def write_summaries(out_dir, trace, names: Sequence[str]) -> list:
    """Write gprobs.json, coincidence.csv and diagnostics.json for ``trace``."""
    out_dir = Path(out_dir)
    write_gprobs(out_dir / "gprobs.json", group_posterior(trace))
    write_coincidence(out_dir / "coincidence.csv", coincidence(trace), names)
    write_diagnostics(out_dir / "diagnostics.json", diagnostics(trace))
    return ["gprobs.json", "coincidence.csv", "diagnostics.json"]
