import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collapsed_lca.dataset import (CategoricalDataset, ConfigError, DatasetError,
                                   DegenerateVariableError, ParseError, Priors, RangeError,
                                   RunConfig, config_from_dict, load_config, load_dataset,
                                   save_dataset, validate_config)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_small_no_header(tmp_path):
    d = load_dataset(write(tmp_path, "1,2\n2,1\n1,1\n"))
    assert d.categories == (2, 2)
    np.testing.assert_array_equal(d.cells, [[1, 2], [2, 1], [1, 1]])
    assert d.names == ("var1", "var2")


def test_load_with_header(tmp_path):
    d = load_dataset(write(tmp_path, "a,b\n1,2\n2,1\n"))
    assert d.names == ("a", "b")
    assert d.n_items == 2


def test_zero_code_is_range_error(tmp_path):
    with pytest.raises(RangeError):
        load_dataset(write(tmp_path, "1,2\n0,1\n2,2\n"))


def test_max_observed_categories(tmp_path):
    d = load_dataset(write(tmp_path, "1,1\n2,2\n3,1\n1,2\n2,1\n"))
    assert d.categories == (3, 2)


def test_declared_categories_may_exceed_observed(tmp_path):
    d = load_dataset(write(tmp_path, "1,1\n2,2\n"), declared_categories=(4, 2))
    assert d.categories == (4, 2)


def test_declared_categories_below_observed_rejected(tmp_path):
    with pytest.raises(RangeError):
        load_dataset(write(tmp_path, "1,3\n2,2\n"), declared_categories=(2, 2))


def test_blank_cell_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_dataset(write(tmp_path, "1,2\n1,\n"))


def test_ragged_row_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_dataset(write(tmp_path, "1,2\n1,2,1\n"))


def test_single_category_column_rejected(tmp_path):
    with pytest.raises(DegenerateVariableError):
        load_dataset(write(tmp_path, "1,2\n1,1\n"))


def test_empty_file_rejected(tmp_path):
    with pytest.raises(ParseError):
        load_dataset(write(tmp_path, ""))


def test_dataset_invariants():
    with pytest.raises(DegenerateVariableError):
        CategoricalDataset(np.ones((2, 1), int), (1,))
    with pytest.raises(DatasetError):
        CategoricalDataset(np.ones((0, 1), int), (2,))
    with pytest.raises(RangeError):
        CategoricalDataset(np.array([[3]]), (2,))


def test_validate_config_cases(small_data):
    validate_config(RunConfig(), Priors(), small_data)
    with pytest.raises(ConfigError) as e:
        validate_config(RunConfig(), Priors(g_max=0))
    assert e.value.field == "g_max"
    with pytest.raises(ConfigError) as e:
        validate_config(RunConfig(initial_g=3), Priors(g_max=2))
    assert e.value.field == "initial_g"
    for bad, name in ((Priors(alpha=0), "alpha"), (Priors(beta=-1), "beta"),
                      (Priors(pi=1.0), "pi"), (Priors(pi_mode="hyper", a0=0), "a0"),
                      (Priors(pi_mode="other"), "pi_mode")):
        with pytest.raises(ConfigError) as e:
            validate_config(RunConfig(), bad)
        assert e.value.field == name
    with pytest.raises(ConfigError):
        validate_config(RunConfig(thin=0), Priors())


def test_config_roundtrip(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"iterations": 10, "alpha": 0.7, "pi_mode": "hyper"}))
    cfg, priors, _ = load_config(p)
    assert cfg.iterations == 10 and priors.alpha == 0.7 and priors.hyper
    with pytest.raises(ConfigError):
        config_from_dict({"nonsense": 1})


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(2, 5), min_size=1, max_size=5), st.integers(1, 20), st.integers(0, 2**32))
def test_save_load_roundtrip(tmp_path_factory, cats, n, seed):
    rng = np.random.default_rng(seed)
    cells = np.column_stack([rng.integers(1, c + 1, size=n) for c in cats])
    # pin every category so the max-observed rule reproduces cats
    cells[0] = cats
    d = CategoricalDataset(cells, cats)
    p = tmp_path_factory.mktemp("rt") / "d.csv"
    save_dataset(p, d)
    back = load_dataset(p)
    assert back == d and back.names == d.names
    save_dataset(p, d, header=False)
    assert load_dataset(p, declared_categories=cats) == d


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="0123456789,-\n x", max_size=40))
def test_loader_is_total(tmp_path_factory, text):
    p = tmp_path_factory.mktemp("fz") / "d.csv"
    p.write_text(text)
    try:
        d = load_dataset(p)
    except DatasetError:
        return
    assert (d.cells >= 1).all() and (d.cells <= np.array(d.categories)).all()
