"""Moments of the integrated-out parameters from a fixed-(G, variables) run.

Given the group sizes and category counts at each retained sweep, the
conditional posterior of every theta row and of tau is Dirichlet, so its
mean and variance are closed-form. Averaging over sweeps with the laws of
total expectation and variance gives the marginal moments.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataset import CategoricalDataset, Priors, RunConfig
from .relabel import relabel_snapshots, relabel_stream
from .sampler import MoveParams, Trace, run


@dataclass(frozen=True)
class ParameterEstimates:
    """Posterior means and sds.

    ``theta_mean[i]`` and ``theta_sd[i]`` have shape (G, C_m) for the
    ``i``-th entry ``m = variables[i]`` of the conditioning variable set.
    """

    g: int
    variables: tuple
    theta_mean: tuple
    theta_sd: tuple
    tau_mean: np.ndarray
    tau_sd: np.ndarray
    n_samples: int

    def theta(self, m: int):
        i = self.variables.index(m)
        return self.theta_mean[i], self.theta_sd[i]


def _dirichlet_moments(a, total):
    """Per-sample Dirichlet means and variances along the last axis."""
    mean = a / total
    var = a * (total - a) / (total * total * (total + 1.0))
    return mean, var


def _total_moments(mean_t, var_t):
    # E[X] = E[E[X|Z]], Var[X] = E[Var[X|Z]] + Var[E[X|Z]]
    mean = mean_t.mean(axis=0)
    var = var_t.mean(axis=0) + mean_t.var(axis=0)
    return mean, np.sqrt(np.maximum(var, 0.0))


def estimate(snapshots: Sequence, categories, variables, priors: Priors) -> ParameterEstimates:
    """Moments of theta (for ``variables``) and tau from relabelled snapshots.

    Parameters
    ----------
    snapshots : sequence of (N_g, N_gmc)
        Group sizes (G,) and flattened category counts (G, sum C) at each
        retained sweep, already relabelled.
    categories : sequence of int
        C_m for every variable of the dataset.
    variables : sequence of int
        0-based indices of the clustering variables.
    priors : Priors

    Raises
    ------
    ValueError
        On an empty trace.
    """
    if len(snapshots) == 0:
        raise ValueError("cannot estimate from an empty trace")
    sizes = np.stack([np.asarray(s, dtype=float) for s, _ in snapshots])
    counts = np.stack([np.asarray(c, dtype=float) for _, c in snapshots])
    t, g = sizes.shape
    cats = np.asarray(categories, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(cats)[:-1]])
    alpha, beta = priors.alpha, priors.beta

    variables = tuple(int(m) for m in variables)
    means, sds = [], []
    for m in variables:
        s = counts[:, :, offsets[m]:offsets[m] + cats[m]] + beta
        tot = sizes[:, :, None] + cats[m] * beta
        mu, sd = _total_moments(*_dirichlet_moments(s, tot))
        means.append(mu)
        sds.append(sd)

    n = sizes.sum(axis=1, keepdims=True)
    tau_mu, tau_sd = _total_moments(*_dirichlet_moments(sizes + alpha, n + g * alpha))
    return ParameterEstimates(g, variables, tuple(means), tuple(sds), tau_mu, tau_sd, t)


def modal_clustering(samples, g: int):
    """Most frequent (relabelled) group of every item.

    Returns
    -------
    labels : int array (N,), 0-based, ties to the smallest group
    probs : float array (N, G) of membership frequencies
    """
    samples = np.asarray(samples, dtype=np.int64)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("need at least one sample")
    t, n = samples.shape
    probs = np.zeros((n, g))
    for row in samples:
        probs[np.arange(n), row] += 1.0
    probs /= t
    return np.argmax(probs, axis=1), probs


@dataclass
class AuxiliaryResult:
    estimates: ParameterEstimates
    labels: np.ndarray
    probs: np.ndarray
    trace: Trace
    perms: np.ndarray


def fit_fixed(data: CategoricalDataset, priors: Priors, cfg: RunConfig, g: int,
              variables, mp: Optional[MoveParams] = None) -> AuxiliaryResult:
    """Frozen-(G, variables) collapsed chain, relabelled and summarised.

    Only ``variables`` (0-based) enter the clustering; the others follow
    the one-class model and are not estimated.
    """
    mask = np.zeros(data.n_vars, dtype=bool)
    mask[list(variables)] = True
    cfg = dataclasses.replace(cfg, initial_g=int(g), store_z=True)
    trace = run(data, priors, cfg, mp, included=mask, fixed_g=True, fixed_variables=True,
                store_stats=True)
    z = trace.z_matrix()
    if z.shape[0] == 0:
        raise ValueError("auxiliary run retained no samples")
    relabelled, perms = relabel_stream(z, g)
    snaps = relabel_snapshots(trace.snapshots, perms)
    est = estimate(snaps, data.categories, np.flatnonzero(mask), priors)
    labels, probs = modal_clustering(relabelled, g)
    trace.z = list(relabelled)
    return AuxiliaryResult(est, labels, probs, trace, perms)


def params_to_dict(est: ParameterEstimates, names: Sequence[str]) -> dict:
    theta = {}
    for h in range(est.g):
        per_var = {}
        for i, m in enumerate(est.variables):
            mu, sd = est.theta_mean[i][h], est.theta_sd[i][h]
            per_var[names[m]] = {str(c + 1): {"mean": float(mu[c]), "sd": float(sd[c])}
                                 for c in range(mu.size)}
        theta[str(h + 1)] = per_var
    tau = {str(h + 1): {"tau_mean": float(est.tau_mean[h]), "tau_sd": float(est.tau_sd[h])}
           for h in range(est.g)}
    return {"g": est.g, "variables": [names[m] for m in est.variables],
            "n_samples": est.n_samples, "theta": theta, "tau": tau}


def write_params(path, est: ParameterEstimates, names: Sequence[str]) -> None:
    with open(path, "w") as fh:
        json.dump(params_to_dict(est, names), fh, indent=2)
        fh.write("\n")


def write_clustering(path, labels, probs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item", "modal_group", "max_probability"])
        for n, (lab, p) in enumerate(zip(labels, probs)):
            w.writerow([n + 1, int(lab) + 1, repr(float(p[lab]))])


def read_clustering(path) -> np.ndarray:
    """0-based modal labels from ``clustering.csv`` (or truth/oracle files)."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([int(r[1]) for r in rows if r], dtype=np.int64) - 1
