import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsekl.data import Dataset
from dsekl.kernels import KernelSpec, eval_kernel
from dsekl.objective import (
    DualModel,
    block_objective,
    decision_function,
    error_rate,
    objective_value,
    predict_labels,
    subgradient,
)

from .conftest import random_dataset


def explicit_decision(X, alpha, x, spec, support):
    return sum(alpha[j] * eval_kernel(x, X[j], spec) for j in support)


def restricted_objective(X, y, alpha, rows, cols, lam, spec):
    """Block objective written out as scalar loops."""
    n = len(y)
    total = 0.0
    for i in rows:
        f = sum(eval_kernel(X[i], X[j], spec) * alpha[j] for j in cols)
        total += max(0.0, 1.0 - y[i] * f)
    return total + len(rows) / n * lam * sum(alpha[j] ** 2 for j in cols)


def test_zero_model_decision_is_zero():
    ds = random_dataset(0, 8, 3)
    m = DualModel.zeros(ds, KernelSpec.rbf(1.0))
    assert decision_function(m, np.array([0.1, 2.0, -3.0])) == 0.0
    assert m.support.size == 0


def test_single_support_point():
    ds = random_dataset(1, 8, 3)
    alpha = np.zeros(8)
    alpha[5] = 1.0
    spec = KernelSpec.rbf(0.9)
    m = DualModel(alpha, ds, spec)
    x = np.array([0.3, -0.2, 1.0])
    assert decision_function(m, x) == pytest.approx(eval_kernel(x, ds.X[5], spec), rel=1e-12)


def test_three_point_model_matches_explicit_sum():
    ds = random_dataset(2, 3, 2)
    alpha = np.array([0.7, -1.3, 2.1])
    spec = KernelSpec.rbf(1.4)
    m = DualModel(alpha, ds, spec)
    rng = np.random.default_rng(0)
    for x in rng.normal(size=(5, 2)):
        assert decision_function(m, x) == pytest.approx(explicit_decision(ds.X, alpha, x, spec, range(3)), rel=1e-12)
    # explicit support subset
    assert decision_function(m, ds.X[0], support=[1]) == pytest.approx(-1.3 * eval_kernel(ds.X[0], ds.X[1], spec))


def test_ties_predict_positive():
    assert predict_labels(np.array([0.0, -0.0, -1e-300, 2.0])).tolist() == [1.0, 1.0, -1.0, 1.0]


def test_alpha_length_must_match():
    ds = random_dataset(3, 4, 2)
    with pytest.raises(ValueError):
        DualModel(np.zeros(3), ds, KernelSpec.rbf(1.0))


def test_decision_dimension_mismatch():
    m = DualModel.zeros(random_dataset(3, 4, 2), KernelSpec.rbf(1.0))
    with pytest.raises(ValueError, match="dimension"):
        decision_function(m, [1.0, 2.0, 3.0])


def test_objective_of_zero_model_counts_batch():
    ds = random_dataset(4, 10, 2)
    m = DualModel.zeros(ds, KernelSpec.rbf(1.0))
    assert objective_value(m, [0, 3, 4, 9], 0.5) == 4.0


def test_objective_on_separated_batch_is_regularizer():
    X = np.array([[3.0, 0.0], [-3.0, 0.0]])
    ds = Dataset(X, [1.0, -1.0])
    alpha = np.array([5.0, -5.0])
    m = DualModel(alpha, ds, KernelSpec.linear())
    # margins: 5*9 + 5*9 = 90 > 1 for both points
    assert objective_value(m, [0, 1], 0.1) == 0.1 * 50.0


def test_objective_four_point_brute_force():
    ds = random_dataset(5, 4, 3)
    alpha = np.array([0.4, -0.2, 0.9, -0.6])
    spec = KernelSpec.rbf(0.8)
    lam = 0.3
    m = DualModel(alpha, ds, spec)
    expected = 0.0
    for i in range(4):
        f = sum(alpha[j] * eval_kernel(ds.X[i], ds.X[j], spec) for j in range(4))
        expected += max(0.0, 1.0 - ds.y[i] * f)
    expected += lam * sum(a * a for a in alpha)
    assert objective_value(m, [0, 1, 2, 3], lam) == pytest.approx(expected, rel=1e-12)


def test_objective_bad_batch():
    m = DualModel.zeros(random_dataset(6, 4, 2), KernelSpec.rbf(1.0))
    with pytest.raises(ValueError):
        objective_value(m, [], 1.0)
    with pytest.raises(IndexError):
        objective_value(m, [4], 1.0)


def test_gradient_at_zero_model():
    ds = random_dataset(7, 12, 3)
    spec = KernelSpec.rbf(1.1)
    m = DualModel.zeros(ds, spec)
    rows, cols = [0, 2, 5, 7], [1, 5, 11]
    g = subgradient(m, rows, cols, 0.7)
    expected = [-sum(ds.y[i] * eval_kernel(ds.X[i], ds.X[j], spec) for i in rows) for j in cols]
    assert g.indices.tolist() == cols
    np.testing.assert_allclose(g.values, expected, rtol=1e-12)


def test_gradient_with_inactive_hinge():
    X = np.array([[2.0], [-2.0], [1.5], [-1.5]])
    ds = Dataset(X, [1.0, -1.0, 1.0, -1.0])
    alpha = np.array([10.0, -10.0, 10.0, -10.0])
    m = DualModel(alpha, ds, KernelSpec.linear())
    rows, cols, lam = [0, 1, 2], [0, 1], 0.25
    g = subgradient(m, rows, cols, lam)
    np.testing.assert_allclose(g.values, (3 / 4) * 2 * lam * alpha[cols], rtol=1e-15)


def test_sparse_gradient_dense_view():
    ds = random_dataset(8, 6, 2)
    g = subgradient(DualModel.zeros(ds, KernelSpec.rbf(1.0)), [0, 1], [4, 2], 1.0)
    d = g.dense(6)
    assert d[[0, 1, 3, 5]].tolist() == [0, 0, 0, 0]
    assert d[4] == g.values[0] and d[2] == g.values[1]


def finite_difference_check(seed, h=1e-6):
    """Returns (max relative error, checked) for one random block instance."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 31))
    d = int(rng.integers(1, 6))
    ds = random_dataset(rng, n, d)
    spec = KernelSpec.rbf(float(rng.uniform(0.5, 2.0)))
    lam = float(10 ** rng.uniform(-3, 0))
    rows = rng.choice(n, size=min(6, n), replace=False)
    cols = rng.choice(n, size=min(4, n), replace=False)
    alpha = rng.normal(scale=2.0, size=n)
    X, y = ds.X, ds.y
    # skip instances with a margin near the kink
    margins = [y[i] * sum(eval_kernel(X[i], X[j], spec) * alpha[j] for j in cols) for i in rows]
    if min(abs(m - 1.0) for m in margins) < 1e-3:
        return None
    g = subgradient(DualModel(alpha, ds, spec), rows, cols, lam).values
    fd = np.empty(len(cols))
    for k, j in enumerate(cols):
        up, down = alpha.copy(), alpha.copy()
        up[j] += h
        down[j] -= h
        fd[k] = (restricted_objective(X, y, up, rows, cols, lam, spec)
                 - restricted_objective(X, y, down, rows, cols, lam, spec)) / (2 * h)
    return np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1.0))


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed):
    err = finite_difference_check(seed)
    if err is None:
        pytest.skip("instance sits on a hinge kink")
    assert err < 1e-5


def test_block_objective_matches_scalar_loops():
    ds = random_dataset(9, 10, 2)
    spec = KernelSpec.rbf(1.0)
    rows, cols = np.array([0, 3, 6]), np.array([1, 2, 9, 4])
    alpha = np.random.default_rng(0).normal(size=10)
    from dsekl.kernels import gram_block

    K = gram_block(ds, rows, cols, spec).values
    value = block_objective(K, ds.y[rows], alpha[cols], 0.2, len(rows) / 10)
    assert value == pytest.approx(restricted_objective(ds.X, ds.y, alpha, rows, cols, 0.2, spec), rel=1e-12)


def test_full_block_objective_equals_full_objective():
    # with I = J = all indices the block objective is the objective itself
    ds = random_dataset(10, 9, 2)
    spec = KernelSpec.rbf(0.7)
    alpha = np.random.default_rng(1).normal(size=9)
    idx = np.arange(9)
    from dsekl.kernels import gram_block

    K = gram_block(ds, idx, idx, spec).values
    m = DualModel(alpha, ds, spec)
    assert block_objective(K, ds.y, alpha, 0.4, 1.0) == pytest.approx(objective_value(m, idx, 0.4), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), c=st.floats(0.01, 100.0))
def test_feature_and_bandwidth_scaling_leave_gradient_unchanged(seed, c):
    ds = random_dataset(seed, 12, 3)
    rng = np.random.default_rng(seed)
    alpha = rng.normal(size=12)
    rows, cols = [0, 1, 4, 8], [2, 3, 11]
    g1 = subgradient(DualModel(alpha, ds, KernelSpec.rbf(1.3)), rows, cols, 0.1).values
    scaled = Dataset(ds.X * c, ds.y)
    g2 = subgradient(DualModel(alpha, scaled, KernelSpec.rbf(1.3 * c)), rows, cols, 0.1).values
    np.testing.assert_allclose(g2, g1, rtol=1e-10, atol=1e-10)


def test_error_rate():
    X = np.array([[1.0], [-1.0], [2.0]])
    ds = Dataset(X, [1.0, -1.0, -1.0])
    m = DualModel(np.array([1.0, 0.0, 0.0]), ds, KernelSpec.linear())
    assert error_rate(m, ds) == pytest.approx(1 / 3)
