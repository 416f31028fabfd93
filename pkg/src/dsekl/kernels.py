"""Kernel evaluation and rectangular Gram blocks.

Blocks are computed fresh on every call; nothing here caches Gram entries, so
the memory used by a training step is bounded by the block it asks for.
"""

from __future__ import annotations

import enum
import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist


class KernelFamily(str, enum.Enum):
    RBF = "rbf"
    LINEAR = "linear"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its parameters.

    The RBF kernel is ``exp(-||x - y||^2 / (2 sigma^2))``; ``sigma`` is ignored
    by the linear kernel.
    """

    family: KernelFamily = KernelFamily.RBF
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if self.family is KernelFamily.RBF and not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"RBF bandwidth must be positive and finite, got {self.sigma!r}")

    @classmethod
    def rbf(cls, sigma: float) -> "KernelSpec":
        return cls(KernelFamily.RBF, float(sigma))

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(KernelFamily.LINEAR, 1.0)

    def __str__(self):
        if self.family is KernelFamily.RBF:
            return f"rbf(sigma={self.sigma:g})"
        return "linear"


@dataclass
class GramBlock:
    values: np.ndarray
    row_indices: np.ndarray
    col_indices: np.ndarray

    @property
    def shape(self):
        return self.values.shape


def eval_kernel(x, y, spec: KernelSpec) -> float:
    """Kernel value for a single pair of dense feature vectors."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: len(x)={x.size}, len(y)={y.size}")
    if spec.family is KernelFamily.LINEAR:
        return float(np.dot(x, y))
    diff = x - y
    return math.exp(-float(np.dot(diff, diff)) / (2.0 * spec.sigma**2))


# Block-size audit hooks, used to check that training never asks for more
# than an I x J block at a time.
_block_observers: list = []
_observer_lock = threading.Lock()


@contextmanager
def track_blocks():
    """Collect the shape of every block computed inside the ``with`` body."""
    shapes: list[tuple[int, int]] = []
    with _observer_lock:
        _block_observers.append(shapes)
    try:
        yield shapes
    finally:
        with _observer_lock:
            _block_observers.remove(shapes)


def _notify(shape):
    if _block_observers:
        with _observer_lock:
            for obs in _block_observers:
                obs.append(shape)


def _check_indices(idx, n, what):
    idx = np.asarray(idx, dtype=np.intp).ravel()
    if idx.size:
        bad = idx[(idx < 0) | (idx >= n)]
        if bad.size:
            raise IndexError(f"{what} index {int(bad[0])} out of range for dataset of size {n}")
    return idx


def kernel_matrix(A, B, spec: KernelSpec, sq_norms_a=None, sq_norms_b=None) -> np.ndarray:
    """Kernel values between the rows of ``A`` and ``B``.

    Dense inputs use exact pairwise differences.  If either side is sparse,
    squared distances come from ``|a|^2 + |b|^2 - 2<a, b>`` with optional
    precomputed row norms.
    """
    sparse = sp.issparse(A) or sp.issparse(B)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]} features")
    if A.shape[0] == 0 or B.shape[0] == 0:
        return np.zeros((A.shape[0], B.shape[0]))

    if spec.family is KernelFamily.LINEAR:
        out = A @ B.T
        return out.toarray() if sp.issparse(out) else np.asarray(out, dtype=float)

    if not sparse:
        d2 = cdist(np.asarray(A, dtype=float), np.asarray(B, dtype=float), "sqeuclidean")
    else:
        if sq_norms_a is None:
            sq_norms_a = _row_sq_norms(A)
        if sq_norms_b is None:
            sq_norms_b = _row_sq_norms(B)
        cross = A @ B.T
        cross = cross.toarray() if sp.issparse(cross) else np.asarray(cross)
        d2 = sq_norms_a[:, None] + sq_norms_b[None, :] - 2.0 * cross
        np.maximum(d2, 0.0, out=d2)
    d2 *= -1.0 / (2.0 * spec.sigma**2)
    return np.exp(d2, out=d2)


def _row_sq_norms(X) -> np.ndarray:
    if sp.issparse(X):
        return np.asarray(X.multiply(X).sum(axis=1)).ravel()
    X = np.asarray(X, dtype=float)
    return np.einsum("ij,ij->i", X, X)


def gram_block(dataset, rows, cols, spec: KernelSpec) -> GramBlock:
    """Materialize ``K[rows, cols]`` for a dataset."""
    n = dataset.n_samples
    rows = _check_indices(rows, n, "row")
    cols = _check_indices(cols, n, "column")
    values = block_values(dataset, rows, cols, spec)
    return GramBlock(values, rows, cols)


def block_values(dataset, rows, cols, spec: KernelSpec) -> np.ndarray:
    # hot path: indices are assumed valid
    X = dataset.X
    if sp.issparse(X):
        norms = dataset.sq_norms
        values = kernel_matrix(X[rows], X[cols], spec, norms[rows], norms[cols])
    else:
        values = kernel_matrix(X[rows], X[cols], spec)
    _notify(values.shape)
    return values
