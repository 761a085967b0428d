import itertools
import math

import numpy as np
import pytest
from scipy.special import betaln, logsumexp

from collapsed_lca.dataset import CategoricalDataset, ConfigError, Priors, RunConfig
from collapsed_lca.posterior import log_collapsed_posterior
from collapsed_lca.sampler import (MoveParams, SamplerState, chain_seeds, eject_or_absorb,
                                   gibbs_sweep_memberships, initial_state, make_rng, read_trace,
                                   run, update_pi, variable_move, write_trace)
from collapsed_lca.suffstats import build

from conftest import random_dataset

CELLS = np.array([[1, 1], [1, 2], [2, 2], [2, 2], [1, 1]])


def enumerate_posterior(data, priors):
    """Exact p(G) and inclusion probabilities by summing the collapsed posterior over every state."""
    lps, keys = [], []
    n, m = data.n_items, data.n_vars
    for g in range(1, priors.g_max + 1):
        for z in itertools.product(range(g), repeat=n):
            s = build(data, np.array(z), g)
            for mask in itertools.product([False, True], repeat=m):
                mask = np.array(mask)
                if priors.hyper:
                    # pi integrated out analytically
                    k = int(mask.sum())
                    fixed = Priors(alpha=priors.alpha, beta=priors.beta, pi=0.5, g_max=priors.g_max)
                    lp = (log_collapsed_posterior(s, mask, g, fixed) - m * math.log(0.5)
                          + betaln(k + priors.a0, m - k + priors.b0) - betaln(priors.a0, priors.b0))
                else:
                    lp = log_collapsed_posterior(s, mask, g, priors)
                lps.append(lp)
                keys.append((g, mask))
    p = np.exp(np.array(lps) - logsumexp(lps))
    pg = np.zeros(priors.g_max)
    pin = np.zeros(m)
    for (g, mask), w in zip(keys, p):
        pg[g - 1] += w
        pin += w * mask
    return pg, pin


@pytest.mark.parametrize("priors,mp", [
    (Priors(g_max=3), MoveParams()),
    (Priors(g_max=3, alpha=1.5, beta=0.6, pi=0.3), MoveParams(p_g=0.3, eject_shape_a=0.6)),
    (Priors(g_max=3, pi_mode="hyper", a0=1.0, b0=1.5), MoveParams(eject_shape_table={2: 3.0, 4: 0.5})),
])
@pytest.mark.slow
def test_chain_targets_exact_posterior(priors, mp):
    data = CategoricalDataset(CELLS, (2, 2))
    pg, pin = enumerate_posterior(data, priors)
    tr = run(data, priors, RunConfig(iterations=80_000, burn_in=1000, thin=1, seed=5), mp)
    g = tr.g_array()
    freq = np.bincount(g, minlength=priors.g_max + 1)[1:] / g.size
    np.testing.assert_allclose(freq, pg, atol=0.015)
    np.testing.assert_allclose(tr.inclusion_matrix().mean(axis=0), pin, atol=0.015)


def test_fixed_g_chain_matches_enumeration():
    data = CategoricalDataset(CELLS, (2, 2))
    priors = Priors(g_max=2)
    inc = np.array([True, True])
    # exact co-membership probability of items 0 and 4 at G=2
    lps, same = [], []
    for z in itertools.product(range(2), repeat=5):
        lps.append(log_collapsed_posterior(build(data, np.array(z), 2), inc, 2, priors))
        same.append(z[0] == z[4])
    p = np.exp(np.array(lps) - logsumexp(lps))
    exact = float(p @ np.array(same))
    cfg = RunConfig(iterations=60_000, burn_in=500, thin=1, seed=2, initial_g=2, store_z=True)
    tr = run(data, priors, cfg, included=inc, fixed_g=True, fixed_variables=True)
    z = tr.z_matrix()
    assert (z[:, 0] == z[:, 4]).mean() == pytest.approx(exact, abs=0.015)
    assert set(tr.g) == {2}


def test_gibbs_sweep_g1_is_noop(rng):
    d = random_dataset(rng, 10, (2, 3))
    priors = Priors()
    state = initial_state(d, priors, RunConfig(), rng)
    before = state.z.copy()
    gibbs_sweep_memberships(state, d, priors, rng)
    np.testing.assert_array_equal(state.z, before)


def test_moves_keep_state_valid(rng):
    d = random_dataset(rng, 40, (2, 3, 4, 2))
    priors = Priors(g_max=6)
    state = initial_state(d, priors, RunConfig(initial_g=3), rng)
    for _ in range(300):
        gibbs_sweep_memberships(state, d, priors, rng)
        eject_or_absorb(state, d, priors, MoveParams(), rng)
        variable_move(state, d, priors, rng)
        state.check(d, priors.g_max)


def test_boundary_rules():
    mp = MoveParams(p_g=0.5)
    assert mp.eject_probability(1, 5) == 1.0
    assert mp.eject_probability(5, 5) == 0.0
    assert mp.eject_probability(3, 5) == 0.5
    d = CategoricalDataset(CELLS, (2, 2))
    rng = make_rng(0)
    priors = Priors(g_max=2)
    state = initial_state(d, priors, RunConfig(), rng)
    for _ in range(200):
        g_before = state.g
        out = eject_or_absorb(state, d, priors, mp, rng)
        assert out.kind == ("eject" if g_before == 1 else "absorb")
    # explicit: G=1 only ejects, G=g_max only absorbs
    for g in (1, 2):
        kinds = set()
        for seed in range(50):
            st_rng = make_rng(seed)
            st = initial_state(d, priors, RunConfig(initial_g=g), st_rng)
            kinds.add(eject_or_absorb(st, d, priors, mp, st_rng).kind)
        assert kinds == ({"eject"} if g == 1 else {"absorb"})
    assert eject_or_absorb(initial_state(d, Priors(g_max=1), RunConfig(), rng), d,
                           Priors(g_max=1), mp, rng) is None


def test_variable_move_r_equals_one():
    d = CategoricalDataset(np.array([[1], [2], [2]]), (2,))
    priors = Priors()
    rng = make_rng(1)
    state = initial_state(d, priors, RunConfig(), rng)
    for _ in range(20):
        out = variable_move(state, d, priors, rng)
        assert out.accepted and out.log_ratio == pytest.approx(0.0, abs=1e-12)


def test_update_pi_beta_counts():
    d = random_dataset(np.random.default_rng(0), 5, (2,) * 6)
    priors = Priors(pi_mode="hyper", a0=1.0, b0=1.5)
    rng = make_rng(3)
    state = initial_state(d, priors, RunConfig(), rng, included=[1, 1, 1, 1, 1, 0])
    draws = np.empty(100_000)
    for i in range(draws.size):
        update_pi(state, priors, rng)
        draws[i] = state.pi
    a, b = 6.0, 2.5
    mean = a / (a + b)
    se = math.sqrt(a * b / ((a + b) ** 2 * (a + b + 1)) / draws.size)
    assert abs(draws.mean() - mean) < 3 * se
    with pytest.raises(ConfigError):
        update_pi(state, Priors(), rng)


def test_update_pi_all_included_mean():
    d = random_dataset(np.random.default_rng(0), 5, (2,) * 4)
    priors = Priors(pi_mode="hyper", a0=1.0, b0=1.0)
    rng = make_rng(4)
    state = initial_state(d, priors, RunConfig(), rng)
    draws = []
    for _ in range(50_000):
        update_pi(state, priors, rng)
        draws.append(state.pi)
    assert np.mean(draws) == pytest.approx(5 / 6, abs=0.005)


def test_zero_iterations_gives_empty_trace(rng):
    d = random_dataset(rng, 10, (2, 2))
    tr = run(d, Priors(), RunConfig(iterations=0, burn_in=5))
    assert tr.g == [] and tr.inclusion_matrix().shape == (0, 2)


def test_runs_are_reproducible(tmp_path, rng):
    d = random_dataset(rng, 60, (2, 3, 3))
    cfg = RunConfig(iterations=300, burn_in=50, thin=3, seed=11, store_z=True)
    a = run(d, Priors(), cfg)
    b = run(d, Priors(), cfg)
    write_trace(a, tmp_path / "a")
    write_trace(b, tmp_path / "b")
    for f in ("trace.csv", "inclusion.csv", "z.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    c = run(d, Priors(), RunConfig(iterations=300, burn_in=50, thin=3, seed=12))
    assert c.log_posterior != a.log_posterior


def test_recorded_log_posterior_matches_recompute(rng):
    d = random_dataset(rng, 50, (2, 3, 4))
    priors = Priors(pi_mode="hyper")
    tr = run(d, priors, RunConfig(iterations=2000, burn_in=0, thin=100, seed=1, store_z=True),
             check_every=500)
    for lp, z, g, inc, pi in zip(tr.log_posterior, tr.z, tr.g, tr.included, tr.pi):
        ref = log_collapsed_posterior(build(d, z, g), inc.astype(bool), g, priors, pi)
        assert lp == pytest.approx(ref, abs=1e-9)


def test_trace_roundtrip(tmp_path, rng):
    d = random_dataset(rng, 30, (2, 3))
    tr = run(d, Priors(), RunConfig(iterations=200, burn_in=0, thin=2, seed=0))
    write_trace(tr, tmp_path)
    back = read_trace(tmp_path, g_max=30)
    assert back.g == tr.g and back.log_posterior == tr.log_posterior
    np.testing.assert_array_equal(back.inclusion_matrix(), tr.inclusion_matrix())


def test_chain_seeds_independent():
    s = chain_seeds(7, 3)
    draws = [make_rng(x).random() for x in s]
    assert len(set(draws)) == 3
    assert make_rng(chain_seeds(7, 3)[1]).random() == draws[1]


def test_state_copy_is_deep(rng):
    d = random_dataset(rng, 10, (2, 2))
    st = initial_state(d, Priors(), RunConfig(initial_g=2), rng)
    cp = st.copy()
    cp.z[0] = 1 - cp.z[0]
    cp.stats.group_sizes[0] += 1
    assert isinstance(cp, SamplerState) and cp.z[0] != st.z[0]
