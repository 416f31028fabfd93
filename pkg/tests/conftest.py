import numpy as np
import pytest
import scipy.sparse as sp

from dsekl.data import Dataset, generate_xor


def random_dataset(rng, n, d, sparse=False, density=0.5):
    rng = np.random.default_rng(rng)
    X = rng.normal(size=(n, d))
    if sparse:
        X[rng.random((n, d)) > density] = 0.0
        X = sp.csr_matrix(X)
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    y[0], y[-1] = 1.0, -1.0
    return Dataset(X, y, "random")


@pytest.fixture
def xor100():
    return generate_xor(100, np.random.default_rng(3))


@pytest.fixture
def small_ds():
    return random_dataset(0, 20, 3)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
