import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collapsed_lca.dataset import Priors, RunConfig
from collapsed_lca.sampler import run
from collapsed_lca.summaries import (agreement, autocorr_ess, autocorrelation, coincidence, diagnostics,
                                     group_posterior, rand_index, write_summaries)

from conftest import random_dataset


def test_group_posterior_hand_count():
    gp = group_posterior([2, 2, 3, 2], g_max=4)
    np.testing.assert_array_equal(gp.p, [0, 0.75, 0.25, 0])
    assert gp.mode() == 2
    assert group_posterior([2, 2], g_max=3).p[1] == 1.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 30), min_size=1, max_size=200))
def test_group_posterior_sums_to_one(gs):
    gp = group_posterior(gs, g_max=30)
    assert math.fsum(gp.p) == 1.0


def test_group_posterior_errors():
    with pytest.raises(ValueError):
        group_posterior([], g_max=3)
    with pytest.raises(ValueError):
        group_posterior([4], g_max=3)


def test_coincidence_hand_count():
    cm = coincidence([2, 2], included=[[1], [0]], g_max=3)
    assert cm.c[1, 0] == 0.5
    assert np.isnan(cm.c[0, 0]) and not cm.visited[0]


def test_coincidence_always_included():
    cm = coincidence([1, 2, 2, 3], included=np.ones((4, 2)), g_max=4)
    np.testing.assert_array_equal(cm.c[:3], 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32))
def test_coincidence_recovers_inclusion_events(seed):
    rng = np.random.default_rng(seed)
    t = int(rng.integers(1, 50))
    gs = rng.integers(1, 5, size=t)
    inc = rng.integers(0, 2, size=(t, 3))
    cm = coincidence(gs, included=inc, g_max=4)
    vals = cm.c[cm.visited]
    assert ((vals >= 0) & (vals <= 1)).all()
    visits = np.bincount(gs - 1, minlength=4)
    events = np.nansum(cm.c * visits[:, None], axis=0)
    np.testing.assert_allclose(events, inc.sum(axis=0), atol=1e-9)


def test_rand_index_values():
    assert rand_index([1, 1, 2], [1, 2, 2]) == pytest.approx(1 / 3)
    assert rand_index([0, 1, 2, 2], [5, 7, 9, 9]) == 1.0
    assert rand_index([0], [1]) == 1.0
    with pytest.raises(ValueError):
        rand_index([0, 1], [0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=2, max_size=30))
def test_rand_index_matches_pair_enumeration(pairs):
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    n = a.size
    agree = sum((a[i] == a[j]) == (b[i] == b[j]) for i in range(n) for j in range(i + 1, n))
    assert rand_index(a, b) == pytest.approx(agree / (n * (n - 1) / 2), abs=1e-15)
    assert rand_index(a, b) == rand_index(b, a)
    assert rand_index((a + 2) % 4, b) == rand_index(a, b)


def test_agreement():
    assert agreement([0, 0, 1, 1, 1], [1, 1, 0, 0, 1]) == 4
    assert agreement([0, 1, 2], [0, 0, 0]) == 1


def test_ess_iid():
    x = np.random.default_rng(0).standard_normal(10_000)
    d = autocorr_ess(x)
    assert abs(d.ess / 10_000 - 1) < 0.15
    assert d.acf[0] == 1.0 and d.acf.size == 51


def test_ess_ar1():
    rng = np.random.default_rng(1)
    phi, t = 0.9, 100_000
    e = rng.standard_normal(t)
    x = np.empty(t)
    x[0] = e[0] / math.sqrt(1 - phi ** 2)
    for i in range(1, t):
        x[i] = phi * x[i - 1] + e[i]
    target = t * (1 - phi) / (1 + phi)
    assert autocorr_ess(x).ess == pytest.approx(target, rel=0.2)


def test_ess_constant_and_short():
    d = autocorr_ess(np.full(20, 3.0))
    assert d.degenerate and d.ess == 20
    assert autocorr_ess([1.0, 2.0, 1.5]).acf.size == 51
    with pytest.raises(ValueError):
        autocorr_ess([1.0])


def test_autocorrelation_matches_direct_sum(rng):
    x = rng.standard_normal(50)
    d = x - x.mean()
    direct = np.array([np.dot(d[:50 - k], d[k:]) for k in range(50)]) / np.dot(d, d)
    np.testing.assert_allclose(autocorrelation(x), direct, atol=1e-12)


def test_write_summaries(tmp_path, rng):
    data = random_dataset(rng, 40, (2, 3, 2))
    tr = run(data, Priors(g_max=5), RunConfig(iterations=300, burn_in=0, thin=3, seed=2))
    names = write_summaries(tmp_path, tr, data.names)
    assert names == ["gprobs.json", "coincidence.csv", "diagnostics.json"]
    gp = json.loads((tmp_path / "gprobs.json").read_text())
    assert list(gp) == ["1", "2", "3", "4", "5"]
    assert math.fsum(gp.values()) == pytest.approx(1.0, abs=1e-15)
    rows = (tmp_path / "coincidence.csv").read_text().splitlines()
    assert rows[0] == "g,var1,var2,var3" and len(rows) == 6
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert set(diag["acceptance"]) == {"eject", "absorb", "include", "exclude"}
    assert diag == json.loads(json.dumps(diagnostics(tr)))
