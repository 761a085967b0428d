import numba
import numpy as np
from scipy.special import gammaln


def log_tables(n_items, categories, alpha, beta):
    """Lookup tables ``log(n + alpha)``, ``log(c + beta)`` and ``log(n + C_m beta)``."""
    n = np.arange(n_items + 1, dtype=np.float64)
    cats = np.asarray(categories, dtype=np.float64)
    return (np.log(n + alpha), np.log(n + beta),
            np.log(n[None, :] + cats[:, None] * beta))


@numba.njit(cache=True)
def item_logweights(codes, sizes, counts, g, incl_vars, current, log_a, log_b, log_cb, out):
    # weights with the item removed from `current`; counts are not modified
    for h in range(g):
        own = 1 if h == current else 0
        nh = sizes[h] - own
        w = log_a[nh]
        for i in range(incl_vars.shape[0]):
            m = incl_vars[i]
            w += log_b[counts[h, codes[m]] - own] - log_cb[m, nh]
        out[h] = w


@numba.njit(cache=True)
def pick(logw, g, u):
    top = logw[0]
    for h in range(1, g):
        if logw[h] > top:
            top = logw[h]
    total = 0.0
    for h in range(g):
        logw[h] = np.exp(logw[h] - top)
        total += logw[h]
    target = u * total
    acc = 0.0
    for h in range(g):
        acc += logw[h]
        if target < acc:
            return h
    return g - 1


@numba.njit(cache=True)
def gibbs_sweep(codes, z, sizes, counts, g, incl_vars, log_a, log_b, log_cb, uniforms):
    """Sequential collapsed Gibbs update of every membership, in item order."""
    n_items, n_vars = codes.shape
    logw = np.empty(g)
    for n in range(n_items):
        old = z[n]
        item_logweights(codes[n], sizes, counts, g, incl_vars, old, log_a, log_b, log_cb, logw)
        new = pick(logw, g, uniforms[n])
        if new != old:
            sizes[old] -= 1
            sizes[new] += 1
            for m in range(n_vars):
                counts[old, codes[n, m]] -= 1
                counts[new, codes[n, m]] += 1
            z[n] = new


def lgamma_tables(n_items, categories, alpha, beta):
    """``lgamma(n + alpha)``, ``lgamma(n + beta)`` and ``lgamma(n + C_m beta)`` for n = 0..N."""
    n = np.arange(n_items + 1, dtype=np.float64)
    cats = np.asarray(categories, dtype=np.float64)
    return (gammaln(n + alpha), gammaln(n + beta), gammaln(n[None, :] + cats[:, None] * beta))


@numba.njit(cache=True)
def group_block(size, row, incl_vars, cats, offsets, consts, lg_a, lg_b, lg_cb):
    # per-group log posterior term without the -lgamma(alpha) constant
    v = lg_a[size]
    for i in range(incl_vars.shape[0]):
        m = incl_vars[i]
        v += consts[m] - lg_cb[m, size]
        o = offsets[m]
        for c in range(cats[m]):
            v += lg_b[row[o + c]]
    return v


@numba.njit(cache=True)
def split_block_change(size, row, new_size, new_row, incl_vars, cats, offsets, consts,
                       lg_a, lg_b, lg_cb, lg_alpha):
    """Change in the group terms when ``new_row`` leaves a group holding ``row``."""
    left = row - new_row
    return (group_block(size - new_size, left, incl_vars, cats, offsets, consts, lg_a, lg_b, lg_cb)
            + group_block(new_size, new_row, incl_vars, cats, offsets, consts, lg_a, lg_b, lg_cb)
            - group_block(size, row, incl_vars, cats, offsets, consts, lg_a, lg_b, lg_cb)
            - lg_alpha)


@numba.njit(cache=True)
def variable_log_ratio(sizes, counts, g, j, cats, offsets, consts, marginal, n_items, lg_b, lg_cb):
    """Log posterior change when variable ``j`` joins the clustering set (pi factor excluded)."""
    o = offsets[j]
    cj = cats[j]
    clustered = g * consts[j]
    for h in range(g):
        clustered -= lg_cb[j, sizes[h]]
        for c in range(cj):
            clustered += lg_b[counts[h, o + c]]
    pooled = consts[j] - lg_cb[j, n_items]
    for c in range(cj):
        pooled += lg_b[marginal[o + c]]
    return clustered - pooled


@numba.njit(cache=True)
def eject_select(z, k, codes, u, uniforms, n_cols):
    """Members of group ``k`` whose uniform falls below ``u``, and their category tally.

    ``uniforms`` holds one draw per member of ``k``, consumed in item order.
    """
    moved = np.empty(uniforms.shape[0], dtype=np.int64)
    row = np.zeros(n_cols, dtype=np.int64)
    n_moved = 0
    i = 0
    for n in range(z.shape[0]):
        if z[n] == k:
            if uniforms[i] < u:
                moved[n_moved] = n
                n_moved += 1
                for m in range(codes.shape[1]):
                    row[codes[n, m]] += 1
            i += 1
    return moved[:n_moved], row


@numba.njit(cache=True)
def partition_terms(sizes, counts, g, included, cats, offsets, consts, marginal, n_items,
                    lg_a, lg_b, lg_cb, lg_alpha):
    """Group and variable terms of the log posterior (G-only and prior terms excluded)."""
    n_vars = cats.shape[0]
    incl_vars = np.empty(n_vars, dtype=np.int64)
    k = 0
    v = 0.0
    for m in range(n_vars):
        if included[m]:
            incl_vars[k] = m
            k += 1
        else:
            o = offsets[m]
            v += consts[m] - lg_cb[m, n_items]
            for c in range(cats[m]):
                v += lg_b[marginal[o + c]]
    incl_vars = incl_vars[:k]
    for h in range(g):
        v += group_block(sizes[h], counts[h], incl_vars, cats, offsets, consts,
                         lg_a, lg_b, lg_cb) - lg_alpha
    return v
