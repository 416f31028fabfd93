"""Kernel expansion model, SVM hinge objective and its block subgradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .kernels import KernelSpec, block_values, gram_block, kernel_matrix

# rows of the query set handled per kernel evaluation in batch prediction
PREDICT_CHUNK = 2048


@dataclass
class DualModel:
    """Coefficients over the rows of ``expansion``: f(x) = sum_j k(x, x_j) alpha_j."""

    alpha: np.ndarray
    expansion: Dataset
    spec: KernelSpec
    # set on models read back from disk, which keep only their support rows
    train_indices: np.ndarray | None = None
    n_train: int | None = None

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.alpha.shape != (self.expansion.n_samples,):
            raise ValueError(f"alpha has shape {self.alpha.shape}, expected ({self.expansion.n_samples},)")

    @classmethod
    def zeros(cls, expansion: Dataset, spec: KernelSpec) -> "DualModel":
        return cls(np.zeros(expansion.n_samples), expansion, spec)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.alpha)

    def decision_values(self, X, support=None) -> np.ndarray:
        """Decision function for every row of ``X`` (dense array or CSR)."""
        if support is None:
            support = self.support
        support = np.asarray(support, dtype=np.intp)
        n = X.shape[0]
        out = np.zeros(n)
        if support.size == 0 or n == 0:
            return out
        S = self.expansion.X[support]
        a = self.alpha[support]
        norms = self.expansion.sq_norms[support] if self.expansion.is_sparse else None
        for start in range(0, n, PREDICT_CHUNK):
            K = kernel_matrix(X[start:start + PREDICT_CHUNK], S, self.spec, sq_norms_b=norms)
            out[start:start + PREDICT_CHUNK] = K @ a
        return out

    def predict(self, X) -> np.ndarray:
        return predict_labels(self.decision_values(X))


@dataclass
class SparseGradient:
    indices: np.ndarray
    values: np.ndarray

    def dense(self, n: int) -> np.ndarray:
        g = np.zeros(n)
        g[self.indices] = self.values
        return g


def decision_function(model: DualModel, x, support=None) -> float:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != model.expansion.n_features:
        raise ValueError(f"dimension mismatch: x has {x.shape[1]} features, model has {model.expansion.n_features}")
    return float(model.decision_values(x, support)[0])


def predict_labels(f: np.ndarray) -> np.ndarray:
    # ties go to +1
    return np.where(f >= 0, 1.0, -1.0)


def error_rate(model, dataset: Dataset) -> float:
    if dataset.n_samples == 0:
        return float("nan")
    return float(np.mean(model.predict(dataset.X) != dataset.y))


def objective_value(model: DualModel, batch, lam: float) -> float:
    """sum_{i in batch} max(0, 1 - y_i f(x_i)) + lam * ||alpha||^2 with the full expansion."""
    batch = np.asarray(batch, dtype=np.intp)
    if batch.size == 0:
        raise ValueError("objective needs a non-empty batch")
    ds = model.expansion
    if batch.min() < 0 or batch.max() >= ds.n_samples:
        raise IndexError(f"batch index out of range for dataset of size {ds.n_samples}")
    f = model.decision_values(ds.X[batch], support=np.arange(ds.n_samples))
    return float(np.maximum(0.0, 1.0 - ds.y[batch] * f).sum() + lam * np.dot(model.alpha, model.alpha))


def hinge_block_step(K: np.ndarray, y_rows: np.ndarray, alpha_cols: np.ndarray, lam: float, reg_scale: float):
    """Subgradient and value of the block objective.

    The block objective is the hinge loss of the rows under the
    column-restricted expansion ``K @ alpha_cols`` plus
    ``reg_scale * lam * ||alpha_cols||^2``.  A margin of exactly 1 counts as
    satisfied.  Returns ``(gradient, objective)``.
    """
    # divergence shows up as non-finite output, which callers check
    with np.errstate(over="ignore", invalid="ignore"):
        margins = y_rows * (K @ alpha_cols)
        violated = margins < 1.0
        g = (reg_scale * 2.0 * lam) * alpha_cols - y_rows[violated] @ K[violated]
        obj = np.maximum(0.0, 1.0 - margins).sum() + reg_scale * lam * np.dot(alpha_cols, alpha_cols)
    return g, float(obj)


def block_objective(K, y_rows, alpha_cols, lam: float, reg_scale: float) -> float:
    return hinge_block_step(K, y_rows, alpha_cols, lam, reg_scale)[1]


def subgradient(model: DualModel, grad_batch, expansion_batch, lam: float) -> SparseGradient:
    """Doubly stochastic subgradient over the sampled block K[grad_batch, expansion_batch].

    Margins use the expansion restricted to ``expansion_batch``; the
    regularizer gradient is scaled by |grad_batch| / N so that one pass over
    the data applies it once in expectation.
    """
    ds = model.expansion
    block = gram_block(ds, grad_batch, expansion_batch, model.spec)
    if block.row_indices.size == 0 or block.col_indices.size == 0:
        raise ValueError("gradient and expansion batches must be non-empty")
    cols = block.col_indices
    reg_scale = block.row_indices.size / ds.n_samples
    g, _ = hinge_block_step(block.values, ds.y[block.row_indices], model.alpha[cols], lam, reg_scale)
    return SparseGradient(cols, g)


def sampled_step(ds: Dataset, spec: KernelSpec, alpha: np.ndarray, rows, cols, lam: float):
    """Unchecked :func:`subgradient` for the training loops; returns ``(g, block objective)``."""
    K = block_values(ds, rows, cols, spec)
    return hinge_block_step(K, ds.y[rows], alpha[cols], lam, len(rows) / ds.n_samples)
