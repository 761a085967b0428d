import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collapsed_lca.suffstats import (ConsistencyError, SuffStats, build, merge_counts, move_item,
                                     split_counts)

from conftest import random_dataset


def test_single_group(small_data):
    s = build(small_data, [0, 0, 0], 1)
    assert s.group_sizes[0] == 3
    np.testing.assert_array_equal(s.group_var_cat[0], s.marginal_var_cat)


def test_hand_tally(small_data):
    s = build(small_data, [0, 1, 0], 2)
    np.testing.assert_array_equal(s.group_sizes, [2, 1])
    # columns: var1 cat1, var1 cat2, var2 cat1, var2 cat2
    np.testing.assert_array_equal(s.group_var_cat, [[2, 0, 1, 1], [0, 1, 1, 0]])
    np.testing.assert_array_equal(s.marginal_var_cat, [2, 1, 2, 1])
    s.check()


def test_item_permutation_invariance(rng):
    d = random_dataset(rng, 30, (2, 3, 4))
    z = rng.integers(3, size=30)
    perm = rng.permutation(30)
    assert build(d, z, 3) == build(d.subset(perm), z[perm], 3)


def test_move_and_back_is_identity(rng):
    d = random_dataset(rng, 20, (3, 2))
    z = rng.integers(3, size=20)
    s = build(d, z, 3)
    before = (s.group_sizes.copy(), s.group_var_cat.copy())
    move_item(s, d, 5, z[5], (z[5] + 1) % 3)
    move_item(s, d, 5, (z[5] + 1) % 3, z[5])
    np.testing.assert_array_equal(s.group_sizes, before[0])
    np.testing.assert_array_equal(s.group_var_cat, before[1])


def test_move_only_member_leaves_empty_group(small_data):
    s = build(small_data, [0, 1, 0], 2)
    move_item(s, small_data, 1, 1, 0)
    assert s.group_sizes[1] == 0
    s.check()


def test_move_from_wrong_group_raises(small_data):
    s = build(small_data, [0, 0, 0], 2)
    with pytest.raises(ConsistencyError):
        move_item(s, small_data, 0, 1, 0)


def test_split_edge_cases(rng):
    d = random_dataset(rng, 15, (2, 3))
    z = rng.integers(2, size=15)
    s = build(d, z, 2)
    none = split_counts(s, d, [], 0, z=z)
    assert none.g == 3 and none.group_sizes[2] == 0
    np.testing.assert_array_equal(none.group_var_cat[:2], s.group_var_cat[:2])
    members = np.flatnonzero(z == 0)
    full = split_counts(s, d, members, 0, z=z)
    assert full.group_sizes[0] == 0
    np.testing.assert_array_equal(full.group_var_cat[2], s.group_var_cat[0])
    with pytest.raises(ValueError):
        split_counts(s, d, np.flatnonzero(z == 1), 0, z=z)


def test_split_and_merge_match_rebuild(rng):
    d = random_dataset(rng, 40, (2, 3, 5))
    for _ in range(50):
        g = int(rng.integers(1, 5))
        z = rng.integers(g, size=40)
        s = build(d, z, g)
        k = int(rng.integers(g))
        members = np.flatnonzero((z == k) & (rng.random(40) < 0.5))
        z2 = z.copy()
        z2[members] = g
        assert split_counts(s, d, members, k) == build(d, z2, g + 1)
        if g >= 2:
            src, dst = rng.choice(g, 2, replace=False)
            z3 = z.copy()
            z3[z3 == src] = dst
            z3[z3 == g - 1] = src
            assert merge_counts(s, int(src), int(dst)) == build(d, z3, g - 1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.lists(st.integers(2, 4), min_size=1, max_size=4))
def test_long_operation_sequences_match_rebuild(seed, cats):
    rng = np.random.default_rng(seed)
    n = 25
    d = random_dataset(rng, n, cats)
    g = 2
    z = rng.integers(g, size=n)
    s = build(d, z, g, capacity=8)
    for _ in range(1000):
        op = rng.random()
        if op < 0.8:
            i = int(rng.integers(n))
            to = int(rng.integers(g))
            move_item(s, d, i, int(z[i]), to)
            z[i] = to
        elif op < 0.9 and g < 6:
            k = int(rng.integers(g))
            members = np.flatnonzero((z == k) & (rng.random(n) < 0.5))
            s = split_counts(s, d, members, k, z=z)
            z[members] = g
            g += 1
        elif g > 1:
            src, dst = (int(v) for v in rng.choice(g, 2, replace=False))
            s = merge_counts(s, src, dst)
            z[z == src] = dst
            z[z == g - 1] = src
            g -= 1
        s.check()
    assert s == build(d, z, g)


def test_check_detects_corruption(small_data):
    s = build(small_data, [0, 1, 0], 2)
    s.group_var_cat[0, 0] += 1
    with pytest.raises(ConsistencyError):
        s.check()


def test_empty_tables():
    s = SuffStats.empty((2, 3), 1)
    assert s.n_items == 0
    s.check()
