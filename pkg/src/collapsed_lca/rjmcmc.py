"""Full-parameter Gibbs sampler for binary LCA with reversible-jump variable moves.

Parameters are kept explicitly: ``theta[g, m]`` = P(category 1) in group
``g`` for clustering variables, ``rho[m]`` = P(category 1) for the others,
and class weights ``tau``. G is fixed.

Including an excluded variable maps ``(rho, u_1..u_{G-1})`` to
``theta_1..theta_G`` through ``logit theta_g = logit rho + u_g`` with
``u_G = -sum(u)`` and ``u_g ~ U(-eps, eps)``. The inverse takes ``logit rho``
as the mean of the ``logit theta_g``. The Jacobian of the forward map is
``G prod_g theta_g (1 - theta_g) / (rho (1 - rho))``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import betaln, expit, gammaln, logit

from .dataset import CategoricalDataset, ConfigError, Priors, RunConfig, validate_config
from .posthoc import ParameterEstimates
from .relabel import relabel_stream
from .sampler import Trace, make_rng

ACCEPTANCE_RULES = ("exact", "literal")


@dataclass
class FullParamState:
    g: int
    z: np.ndarray
    included: np.ndarray
    theta: np.ndarray   # (G, M); rows meaningful only for included variables
    rho: np.ndarray     # (M,); meaningful only for excluded variables
    tau: np.ndarray
    pi: float
    epsilon: float

    def copy(self) -> "FullParamState":
        return dataclasses.replace(self, z=self.z.copy(), included=self.included.copy(),
                                   theta=self.theta.copy(), rho=self.rho.copy(),
                                   tau=self.tau.copy())


def binary_indicators(data: CategoricalDataset) -> np.ndarray:
    """``X[n, m] = 1`` where the cell holds category 1, else 0.

    Raises
    ------
    ValueError
        If any variable has more than two categories.
    """
    if any(c != 2 for c in data.categories):
        raise ValueError("the reversible-jump baseline needs binary data (C_m = 2 for all m)")
    return (np.asarray(data.cells) == 1).astype(np.int64)


def _group_counts(x, z, g):
    """``S[g, m]`` (category-1 count) and ``N_g``."""
    sizes = np.bincount(z, minlength=g)
    s = np.zeros((g, x.shape[1]), dtype=np.int64)
    np.add.at(s, z, x)
    return s, sizes


def include_map(rho: float, u) -> np.ndarray:
    """Forward bijection: ``theta_g = sigmoid(logit(rho) + u_g)``, ``u_G = -sum(u)``."""
    u = np.asarray(u, dtype=float)
    full = np.append(u, -u.sum())
    return expit(logit(rho) + full)


def exclude_map(theta):
    """Inverse bijection: ``(rho, u_1..u_{G-1})`` from ``theta_1..theta_G``.

    ``rho`` equals ``a / (a + b)`` with ``a``, ``b`` the geometric means of
    ``theta`` and ``1 - theta``, which is the logit mean below.
    """
    lt = logit(np.asarray(theta, dtype=float))
    centre = lt.mean()
    return float(expit(centre)), lt[:-1] - centre


def log_jacobian(rho: float, theta) -> float:
    """``log |d theta / d (rho, u)|`` for the forward map."""
    theta = np.asarray(theta, dtype=float)
    return float(math.log(theta.size) + np.sum(np.log(theta) + np.log1p(-theta))
                 - math.log(rho) - math.log1p(-rho))


def _log_beta_density(p, beta):
    p = np.asarray(p, dtype=float)
    return (beta - 1.0) * (np.log(p) + np.log1p(-p)) - betaln(beta, beta)


def log_inclusion_ratio(s_j, n_g, n_j1, n_items, rho, theta, priors: Priors, pi: float,
                        epsilon: float, n_vars: int = 1, rule: str = "exact") -> float:
    """Log acceptance ratio of including a variable with proposed ``theta``.

    Parameters
    ----------
    s_j : (G,) category-1 counts of the variable per group
    n_g : (G,) group sizes
    n_j1 : int, category-1 count over all items
    rho, theta : current pooled probability and proposed group probabilities
    rule : "exact" or "literal"
        "exact" is the reversible ratio: likelihood, priors on theta and rho
        (each counted once), inclusion prior, Jacobian and the density
        ``(2 eps)^-(G-1)`` of the auxiliary draws; variable-choice
        probabilities cancel. "literal" uses a theta prior factor of
        ``G B(beta, beta)^-1 prod theta^(beta-1) (1-theta)^(beta-1)`` counted
        twice, a ``1/M`` move probability and no auxiliary density. It is not
        reversible and exists only for comparison.
    """
    theta = np.asarray(theta, dtype=float)
    s_j = np.asarray(s_j, dtype=float)
    n_g = np.asarray(n_g, dtype=float)
    g = theta.size
    beta = priors.beta
    log_lik = (np.sum(s_j * np.log(theta) + (n_g - s_j) * np.log1p(-theta))
               - n_j1 * math.log(rho) - (n_items - n_j1) * math.log1p(-rho))
    log_theta_prior = float(np.sum(_log_beta_density(theta, beta)))
    log_rho_prior = float(_log_beta_density(rho, beta))
    log_jac = log_jacobian(rho, theta)
    if rule == "exact":
        return float(log_lik + log_theta_prior - log_rho_prior
                     + math.log(pi) - math.log1p(-pi)
                     + log_jac + (g - 1) * math.log(2.0 * epsilon))
    if rule == "literal":
        lit_theta = (math.log(g) - betaln(beta, beta)
                     + (beta - 1.0) * float(np.sum(np.log(theta) + np.log1p(-theta))))
        return float(log_lik + 2.0 * lit_theta - log_rho_prior + log_jac - math.log(n_vars))
    raise ValueError(f"unknown acceptance rule {rule!r}")


def _conditional_params(state: FullParamState, x, priors: Priors, rng, s=None, sizes=None):
    g = state.g
    if s is None:
        s, sizes = _group_counts(x, state.z, g)
    beta = priors.beta
    inc = state.included
    state.theta[:, inc] = rng.beta(s[:, inc] + beta, sizes[:, None] - s[:, inc] + beta)
    n1 = x.sum(axis=0)
    exc = ~inc
    state.rho[exc] = rng.beta(n1[exc] + beta, x.shape[0] - n1[exc] + beta)
    state.tau = rng.dirichlet(sizes + priors.alpha)
    _clip(state)


def _clip(state):
    # keep draws strictly inside (0, 1) so every log stays finite
    tiny = np.finfo(float).tiny
    np.clip(state.theta, tiny, 1 - 1e-16, out=state.theta)
    np.clip(state.rho, tiny, 1 - 1e-16, out=state.rho)
    np.clip(state.tau, tiny, None, out=state.tau)


def full_gibbs_sweep(state: FullParamState, x, priors: Priors, rng: np.random.Generator) -> None:
    """Draw theta, rho and tau from their conditionals, then every membership.

    ``x`` is the binary indicator matrix from :func:`binary_indicators`.
    """
    _conditional_params(state, x, priors, rng)
    inc = state.included
    logp = np.log(state.tau)[None, :].repeat(x.shape[0], axis=0)
    if inc.any():
        th = state.theta[:, inc]
        xi = x[:, inc]
        logp += xi @ np.log(th).T + (1 - xi) @ np.log1p(-th).T
    logp -= logp.max(axis=1, keepdims=True)
    w = np.exp(logp)
    cdf = np.cumsum(w, axis=1)
    u = rng.random(x.shape[0]) * cdf[:, -1]
    state.z = np.minimum((u[:, None] >= cdf).sum(axis=1), state.g - 1).astype(np.int64)


def rj_inclusion(state: FullParamState, x, priors: Priors, rng, j: int, rule: str = "exact"):
    """Propose moving excluded variable ``j`` into the clustering set."""
    if state.included[j]:
        raise ValueError(f"variable {j} is already included")
    g = state.g
    u = rng.uniform(-state.epsilon, state.epsilon, size=g - 1)
    rho = float(state.rho[j])
    theta = include_map(rho, u)
    s, sizes = _group_counts(x[:, [j]], state.z, g)
    log_a = log_inclusion_ratio(s[:, 0], sizes, int(x[:, j].sum()), x.shape[0], rho, theta,
                                priors, state.pi, state.epsilon, x.shape[1], rule)
    accepted = _accept(log_a, rng)
    if accepted:
        state.theta[:, j] = theta
        state.included[j] = True
        _clip(state)
    return "include", accepted, log_a


def rj_exclusion(state: FullParamState, x, priors: Priors, rng, j: int, rule: str = "exact"):
    """Propose moving included variable ``j`` out of the clustering set.

    Under the exact rule a reverse draw outside ``(-eps, eps)`` cannot be
    proposed by an inclusion, so such exclusions are rejected outright.
    """
    if not state.included[j]:
        raise ValueError(f"variable {j} is already excluded")
    g = state.g
    theta = state.theta[:, j].copy()
    rho, u = exclude_map(theta)
    rho = min(max(rho, np.finfo(float).tiny), 1 - 1e-16)
    s, sizes = _group_counts(x[:, [j]], state.z, g)
    log_a = -log_inclusion_ratio(s[:, 0], sizes, int(x[:, j].sum()), x.shape[0], rho, theta,
                                 priors, state.pi, state.epsilon, x.shape[1], rule)
    if rule == "literal":
        # the display's exclusion ratio divides by the move probability again
        log_a -= 2.0 * math.log(x.shape[1])
    reachable = bool(np.all(np.abs(u) < state.epsilon))
    if rule == "exact" and not reachable:
        return "exclude", False, -math.inf
    accepted = _accept(log_a, rng)
    if accepted:
        state.rho[j] = rho
        state.included[j] = False
    return "exclude", accepted, log_a


def _accept(log_a: float, rng) -> bool:
    return log_a >= 0 or math.log1p(-rng.random()) < log_a


def log_joint(state: FullParamState, x, priors: Priors) -> float:
    """Log of data, memberships, parameters and inclusion under their priors."""
    s, sizes = _group_counts(x, state.z, state.g)
    inc = state.included
    n1 = x.sum(axis=0)
    n = x.shape[0]
    beta, alpha = priors.beta, priors.alpha
    th = state.theta[:, inc]
    value = float(np.sum(sizes * np.log(state.tau)))
    value += float(np.sum(s[:, inc] * np.log(th) + (sizes[:, None] - s[:, inc]) * np.log1p(-th)))
    rho = state.rho[~inc]
    value += float(np.sum(n1[~inc] * np.log(rho) + (n - n1[~inc]) * np.log1p(-rho)))
    value += float(gammaln(state.g * alpha) - state.g * gammaln(alpha)
                   + (alpha - 1) * np.sum(np.log(state.tau)))
    value += float(np.sum(_log_beta_density(th, beta)) + np.sum(_log_beta_density(rho, beta)))
    k = int(inc.sum())
    value += k * math.log(state.pi) + (inc.size - k) * math.log1p(-state.pi)
    return value


def initial_full_state(data: CategoricalDataset, x, priors: Priors, g: int, epsilon: float,
                       rng, included=None) -> FullParamState:
    m = data.n_vars
    z = rng.integers(g, size=data.n_items).astype(np.int64)
    mask = np.ones(m, dtype=bool) if included is None else np.asarray(included, dtype=bool).copy()
    pi = priors.a0 / (priors.a0 + priors.b0) if priors.hyper else priors.pi
    state = FullParamState(g, z, mask, np.full((g, m), 0.5), np.full(m, 0.5),
                           np.full(g, 1.0 / g), pi, float(epsilon))
    _conditional_params(state, x, priors, rng)
    return state


def run_fixed_g(data: CategoricalDataset, priors: Priors, cfg: RunConfig, g: int,
                epsilon: float = 1.0, *, included=None, fixed_variables: bool = False,
                rule: str = "exact", rng: Optional[np.random.Generator] = None):
    """Full Gibbs sweeps at fixed ``g``, each followed by one reversible-jump variable move.

    Returns
    -------
    trace : Trace
        Log joint, inclusion masks and (if ``cfg.store_z``) memberships at
        retained sweeps; ``accept_counts`` tallies include/exclude moves.
    estimates : ParameterEstimates or None
        Moments of theta (for variables included at every retained sweep)
        and tau after relabelling the retained draws; None if nothing was
        retained.
    """
    if rule not in ACCEPTANCE_RULES:
        raise ConfigError("rule", f"must be one of {ACCEPTANCE_RULES}")
    if not epsilon > 0:
        raise ConfigError("epsilon", f"must be positive, got {epsilon}")
    cfg = dataclasses.replace(cfg, initial_g=int(g))
    validate_config(cfg, priors, data)
    x = binary_indicators(data)
    rng = rng or make_rng(cfg.seed)
    state = initial_full_state(data, x, priors, g, epsilon, rng, included)
    trace = Trace(n_vars=data.n_vars, g_max=priors.g_max, names=data.names)
    zs, thetas, taus = [], [], []
    total = cfg.burn_in + cfg.iterations
    for sweep in range(1, total + 1):
        full_gibbs_sweep(state, x, priors, rng)
        if not fixed_variables:
            j = int(rng.integers(data.n_vars))
            move = rj_exclusion if state.included[j] else rj_inclusion
            kind, accepted, _ = move(state, x, priors, rng, j, rule)
            counts = trace.accept_counts[kind]
            counts[0] += 1
            counts[1] += int(accepted)
        if priors.hyper:
            k = int(state.included.sum())
            state.pi = float(rng.beta(k + priors.a0, data.n_vars - k + priors.b0))
        kept = sweep - cfg.burn_in
        if kept > 0 and kept % cfg.thin == 0:
            trace.sweeps.append(sweep)
            trace.log_posterior.append(log_joint(state, x, priors))
            trace.g.append(g)
            trace.included.append(state.included.astype(np.int8))
            trace.pi.append(state.pi)
            zs.append(state.z.copy())
            thetas.append(np.where(state.included[None, :], state.theta, np.nan))
            taus.append(state.tau.copy())
    trace.sweeps_run = total
    if cfg.store_z:
        trace.z = list(zs)
    if not zs:
        return trace, None
    return trace, _estimates(np.vstack(zs), np.stack(thetas), np.vstack(taus), g)


def _estimates(zs, thetas, taus, g) -> ParameterEstimates:
    _, perms = relabel_stream(zs, g)
    t = zs.shape[0]
    th = np.empty_like(thetas)
    ta = np.empty_like(taus)
    for i in range(t):
        th[i, perms[i]] = thetas[i]
        ta[i, perms[i]] = taus[i]
    always = np.flatnonzero(~np.isnan(th).any(axis=(0, 1)))
    means, sds = [], []
    for m in always:
        p = th[:, :, m]
        mu, sd = p.mean(axis=0), p.std(axis=0)
        means.append(np.column_stack([mu, 1 - mu]))
        sds.append(np.column_stack([sd, sd]))
    return ParameterEstimates(g, tuple(int(m) for m in always), tuple(means), tuple(sds),
                              ta.mean(axis=0), ta.std(axis=0), t)
