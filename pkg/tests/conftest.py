import numpy as np
import pytest

from collapsed_lca.dataset import CategoricalDataset


def random_dataset(rng, n_items, categories):
    cells = np.column_stack([rng.integers(1, c + 1, size=n_items) for c in categories])
    return CategoricalDataset(cells, categories)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_data():
    # the 3 x 2 example used throughout: rows (1,2), (2,1), (1,1)
    return CategoricalDataset(np.array([[1, 2], [2, 1], [1, 1]]), (2, 2))


# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
