"""Log-domain collapsed posterior over (G, Z, inclusion) and its move ratios.

Every quantity is a natural log and includes all constant factors, so
values are comparable across inclusion partitions and group counts.
"""

from __future__ import annotations

import functools
import math

import numpy as np
from scipy.special import gammaln, logsumexp

from .dataset import Priors
from .suffstats import SuffStats


def _as_mask(included, n_vars):
    mask = np.asarray(included, dtype=bool)
    if mask.shape != (n_vars,):
        raise ValueError(f"inclusion mask must have length {n_vars}")
    return mask


@functools.lru_cache(maxsize=64)
def _log_truncated_poisson(g_max: int, rate: float) -> tuple:
    ks = np.arange(1, g_max + 1)
    log_pmf = ks * math.log(rate) - gammaln(ks + 1.0)
    return tuple((log_pmf - logsumexp(log_pmf)).tolist())


def log_prior_g(g: int, priors: Priors) -> float:
    """Log of a Poisson(rate) pmf at ``g`` renormalised over ``1..g_max``."""
    if not 1 <= g <= priors.g_max:
        raise ValueError(f"G = {g} outside 1..{priors.g_max}")
    return _log_truncated_poisson(int(priors.g_max), float(priors.poisson_rate))[g - 1]


def log_prior_inclusion(n_included: int, n_vars: int, pi: float) -> float:
    return n_included * math.log(pi) + (n_vars - n_included) * math.log1p(-pi)


def log_prior_pi(pi: float, priors: Priors) -> float:
    a, b = priors.a0, priors.b0
    return float((a - 1) * math.log(pi) + (b - 1) * math.log1p(-pi)
                 - (gammaln(a) + gammaln(b) - gammaln(a + b)))


def _dirichlet_const(categories, beta):
    c = np.asarray(categories, dtype=float)
    return gammaln(c * beta) - c * gammaln(beta)


def log_collapsed_posterior(stats: SuffStats, included, g: int, priors: Priors,
                            pi: float | None = None) -> float:
    """Unnormalised log posterior of ``(G, Z, nu)`` with theta, rho, tau integrated out.

    Parameters
    ----------
    stats : SuffStats
        Count tables for the current memberships, with ``stats.g == g``.
    included : bool array of shape (M,)
        Clustering-variable mask.
    g : int
        Number of groups, empty ones included.
    priors : Priors
    pi : float, optional
        Current inclusion probability. Required in hyper mode, where the
        Beta(a0, b0) log density of ``pi`` is also added. Defaults to
        ``priors.pi`` in fixed mode.

    Returns
    -------
    float
    """
    cats = np.asarray(stats.categories)
    mask = _as_mask(included, len(cats))
    if stats.g != g:
        raise ValueError(f"tables describe {stats.g} groups, not {g}")
    if pi is None:
        if priors.hyper:
            raise ValueError("pi must be supplied in hyper mode")
        pi = priors.pi
    alpha, beta = priors.alpha, priors.beta
    n = stats.n_items
    sizes, counts = stats.active()

    value = log_prior_g(g, priors) + log_prior_inclusion(int(mask.sum()), len(cats), pi)
    if priors.hyper:
        value += log_prior_pi(pi, priors)

    value += gammaln(g * alpha) - g * gammaln(alpha)
    value += gammaln(sizes + alpha).sum() - gammaln(n + g * alpha)

    const = _dirichlet_const(cats, beta)
    lg_marg = gammaln(stats.marginal_var_cat + beta)
    lg_group = gammaln(counts + beta)
    for m in range(len(cats)):
        sl = stats.var_slice(m)
        if mask[m]:
            value += g * const[m] + lg_group[:, sl].sum() - gammaln(sizes + cats[m] * beta).sum()
        else:
            value += const[m] + lg_marg[sl].sum() - gammaln(n + cats[m] * beta)
    return float(value)


def log_group_terms(sizes, counts, categories, included, priors: Priors) -> np.ndarray:
    """Per-group additive contribution to the log posterior.

    For group ``h`` this is ``lgamma(N_h + alpha) - lgamma(alpha)`` plus the
    Dirichlet-multinomial block of every clustering variable. An empty
    group contributes exactly zero.
    """
    sizes = np.atleast_1d(np.asarray(sizes, dtype=float))
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    cats = np.asarray(categories)
    mask = np.asarray(included, dtype=bool)
    beta = priors.beta
    out = gammaln(sizes + priors.alpha) - gammaln(priors.alpha)
    if mask.any():
        col_mask = np.repeat(mask, cats)
        const = _dirichlet_const(cats[mask], beta).sum()
        out = out + const + gammaln(counts[:, col_mask] + beta).sum(axis=1)
        out = out - gammaln(sizes[:, None] + cats[mask][None, :] * beta).sum(axis=1)
    return out


def log_g_terms(g: int, n_items: int, priors: Priors) -> float:
    """Terms of the log posterior that depend on G alone."""
    a = priors.alpha
    return float(log_prior_g(g, priors) + gammaln(g * a) - gammaln(n_items + g * a))


def log_eject_posterior_ratio(stats: SuffStats, proposed: SuffStats, k: int,
                              included, priors: Priors) -> float:
    """``log p(G+1, Z~, nu) - log p(G, Z, nu)`` for a split of group ``k``.

    ``proposed`` holds the split tables, with the ejected items in group
    ``stats.g`` and the remainder still in ``k``.
    """
    g = stats.g
    new = g
    cats = stats.categories
    before = log_group_terms(stats.group_sizes[k], stats.group_var_cat[k], cats, included, priors)
    after = log_group_terms(proposed.group_sizes[[k, new]], proposed.group_var_cat[[k, new]],
                            cats, included, priors)
    n = stats.n_items
    return float(log_g_terms(g + 1, n, priors) - log_g_terms(g, n, priors)
                 + after.sum() - before.sum())


def gibbs_membership_logweights(stats: SuffStats, included, g: int, priors: Priors,
                                data, n: int, current: int) -> np.ndarray:
    """Unnormalised log full conditional of item ``n`` over the ``g`` groups.

    The item's own contribution to group ``current`` is removed before the
    weights are formed; ``stats`` is not modified.
    """
    codes = data.flat_codes()[n] if hasattr(data, "flat_codes") else np.asarray(data)[n]
    cats = np.asarray(stats.categories)
    mask = _as_mask(included, len(cats))
    sizes = stats.group_sizes[:g].astype(float)
    sizes[current] -= 1
    logw = np.log(sizes + priors.alpha)
    if mask.any():
        counts = stats.group_var_cat[:g][:, codes[mask]].astype(float)
        counts[current] -= 1
        logw += np.log(counts + priors.beta).sum(axis=1)
        logw -= np.log(sizes[:, None] + cats[mask][None, :] * priors.beta).sum(axis=1)
    return logw


def log_variable_move_ratio(stats: SuffStats, included, g: int, priors: Priors, j: int,
                            pi: float | None = None) -> float:
    """Log acceptance ratio for flipping the inclusion of variable ``j``.

    Positive direction (``j`` currently excluded) gives ``log R``; for an
    included ``j`` the value is ``-log R``.
    """
    mask = _as_mask(included, len(stats.categories))
    if pi is None:
        pi = priors.pi
    beta = priors.beta
    c_j = stats.categories[j]
    sl = stats.var_slice(j)
    sizes, counts = stats.active()
    n = stats.n_items
    const = float(_dirichlet_const([c_j], beta)[0])
    clustered = (g * const + gammaln(counts[:, sl] + beta).sum()
                 - gammaln(sizes + c_j * beta).sum())
    pooled = const + gammaln(stats.marginal_var_cat[sl] + beta).sum() - gammaln(n + c_j * beta)
    log_r = clustered - pooled + math.log(pi) - math.log1p(-pi)
    return float(-log_r if mask[j] else log_r)
