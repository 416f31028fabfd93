"""Datasets: libsvm text I/O, the XOR toy problem, random splits, scaling."""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

DATA_DIR_ENV = "DSEKL_DATA_DIR"


class LibsvmFormatError(ValueError):
    """Malformed libsvm input; ``lineno`` is 1-based."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(eq=False)
class Dataset:
    """Feature rows (dense array or CSR matrix) with labels in {-1, +1}."""

    X: np.ndarray | sp.csr_matrix
    y: np.ndarray
    name: str = ""
    n_features: int = field(default=-1)

    def __post_init__(self):
        if sp.issparse(self.X):
            self.X = sp.csr_matrix(self.X, dtype=float)
            self.X.sort_indices()
        else:
            self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"{self.X.shape[0]} rows but {self.y.shape[0]} labels")
        if self.n_features < 0:
            self.n_features = self.X.shape[1]
        elif self.n_features != self.X.shape[1]:
            raise ValueError(f"n_features={self.n_features} but X has {self.X.shape[1]} columns")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    def __len__(self):
        return self.n_samples

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.X)

    @cached_property
    def sq_norms(self) -> np.ndarray:
        if self.is_sparse:
            return np.asarray(self.X.multiply(self.X).sum(axis=1)).ravel()
        return np.einsum("ij,ij->i", self.X, self.X)

    def subset(self, idx, name: str | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.X[idx], self.y[idx], name if name is not None else self.name, self.n_features)

    def dense(self) -> "Dataset":
        if not self.is_sparse:
            return self
        return Dataset(self.X.toarray(), self.y, self.name, self.n_features)

    def with_features(self, n_features: int) -> "Dataset":
        """Pad (or check) the feature dimension, e.g. to align train and test files."""
        if n_features == self.n_features:
            return self
        if n_features < self.n_features:
            raise ValueError(f"cannot shrink {self.n_features} features to {n_features}")
        if self.is_sparse:
            X = sp.csr_matrix((self.X.data, self.X.indices, self.X.indptr), shape=(self.n_samples, n_features))
        else:
            X = np.hstack([self.X, np.zeros((self.n_samples, n_features - self.n_features))])
        return Dataset(X, self.y, self.name, n_features)

    def check_binary(self):
        bad = ~np.isin(self.y, (-1.0, 1.0))
        if bad.any():
            raise ValueError(f"labels must be -1/+1; found {self.y[bad][0]!r} at row {int(np.argmax(bad))}")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.X.shape != other.X.shape or not np.array_equal(self.y, other.y):
            return False
        a = self.X.toarray() if self.is_sparse else self.X
        b = other.X.toarray() if other.is_sparse else other.X
        return np.array_equal(a, b)


# --------------------------------------------------------------------------
# libsvm text format
# --------------------------------------------------------------------------


def parse_libsvm(stream, n_features: int | None = None, name: str = "") -> Dataset:
    """Parse ``<label> <idx>:<val> ...`` lines into a sparse ``Dataset``.

    Indices are 1-based in the file and 0-based in the result.  Blank lines
    and ``#`` comments are skipped.  Two distinct labels are mapped to -1
    (smaller) and +1 (larger); a single-class file keeps the sign of its label.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    labels: list[float] = []
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    max_index = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise LibsvmFormatError(lineno, f"non-numeric label {tokens[0]!r}") from None
        if not math.isfinite(label):
            raise LibsvmFormatError(lineno, f"non-finite label {tokens[0]!r}")
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            try:
                if not sep:
                    raise ValueError
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise LibsvmFormatError(lineno, f"bad token {tok!r}, expected <index>:<value>") from None
            if idx < 1:
                raise LibsvmFormatError(lineno, f"feature index {idx} is not 1-based")
            if idx <= prev:
                raise LibsvmFormatError(lineno, f"feature indices not strictly increasing ({prev} then {idx})")
            prev = idx
            indices.append(idx - 1)
            values.append(val)
        max_index = max(max_index, prev)
        labels.append(label)
        indptr.append(len(indices))

    distinct = sorted(set(labels))
    if len(distinct) > 2:
        shown = ", ".join(f"{v:g}" for v in distinct[:5])
        raise ValueError(f"expected a binary problem, found {len(distinct)} distinct labels ({shown})")
    y = np.asarray(labels, dtype=float)
    if len(distinct) == 2:
        y = np.where(y == distinct[1], 1.0, -1.0)
    elif len(distinct) == 1:
        y = np.full_like(y, 1.0 if distinct[0] > 0 else -1.0)

    if n_features is None:
        n_features = max_index
    elif n_features < max_index:
        raise ValueError(f"n_features={n_features} but the data uses index {max_index}")
    X = sp.csr_matrix(
        (np.asarray(values, dtype=float), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(labels), n_features),
    )
    return Dataset(X, y, name, n_features)


def write_libsvm(dataset: Dataset, stream) -> None:
    X = dataset.X if dataset.is_sparse else sp.csr_matrix(dataset.X)
    for i in range(dataset.n_samples):
        start, end = X.indptr[i], X.indptr[i + 1]
        body = " ".join(f"{j + 1}:{float(v)!r}" for j, v in zip(X.indices[start:end], X.data[start:end]) if v != 0.0)
        label = "+1" if dataset.y[i] > 0 else "-1"
        stream.write(f"{label} {body}\n" if body else f"{label}\n")


def resolve_data_path(path: str | os.PathLike) -> Path:
    """Look ``path`` up as given, then under ``$DSEKL_DATA_DIR``."""
    p = Path(path)
    if p.exists():
        return p
    root = os.environ.get(DATA_DIR_ENV)
    if root:
        for cand in (Path(root) / p, Path(root) / p.name):
            if cand.exists():
                return cand
    raise FileNotFoundError(f"dataset not found: {path} (also looked under ${DATA_DIR_ENV})")


def load_libsvm(path, n_features: int | None = None) -> Dataset:
    path = resolve_data_path(path)
    with open(path) as fh:
        return parse_libsvm(fh, n_features=n_features, name=path.stem)


def save_libsvm(dataset: Dataset, path) -> None:
    with open(path, "w") as fh:
        write_libsvm(dataset, fh)


# --------------------------------------------------------------------------
# synthetic data, splits, scaling
# --------------------------------------------------------------------------

XOR_CENTERS = {
    1.0: np.array([[1.0, 1.0], [-1.0, -1.0]]),
    -1.0: np.array([[1.0, -1.0], [-1.0, 1.0]]),
}


def generate_xor(n: int, rng, noise: float = 0.2, noise_is_variance: bool = False) -> Dataset:
    """The four-blob XOR problem.

    Class +1 sits around [1, 1] and [-1, -1], class -1 around [1, -1] and
    [-1, 1]; each point picks one of its class's two centers at random and
    adds isotropic Gaussian noise with standard deviation ``noise`` (or
    ``sqrt(noise)`` when ``noise_is_variance``).
    """
    if n < 4:
        raise ValueError("XOR needs at least 4 points")
    rng = np.random.default_rng(rng)
    std = math.sqrt(noise) if noise_is_variance else noise
    n_pos = (n + 1) // 2
    y = np.concatenate([np.ones(n_pos), -np.ones(n - n_pos)])
    rng.shuffle(y)
    which = rng.integers(0, 2, size=n)
    centers = np.where(
        (y > 0)[:, None],
        XOR_CENTERS[1.0][which],
        XOR_CENTERS[-1.0][which],
    )
    X = centers + std * rng.standard_normal((n, 2))
    return Dataset(X, y, "xor")


def split(dataset: Dataset, sizes: Sequence[float | int], rng) -> list[Dataset]:
    """Disjoint random subsets.

    Each entry of ``sizes`` is either a fraction (float) of the dataset or an
    absolute count (int).
    """
    n = dataset.n_samples
    counts = []
    frac_total = 0.0
    for s in sizes:
        if isinstance(s, (int, np.integer)) and not isinstance(s, bool):
            if s < 0:
                raise ValueError(f"negative split size {s}")
            counts.append(int(s))
        else:
            s = float(s)
            if not s > 0:
                raise ValueError(f"split fractions must be positive, got {s}")
            frac_total += s
            counts.append(int(round(s * n)))
    if frac_total > 1.0 + 1e-12:
        raise ValueError(f"split fractions sum to {frac_total:g} > 1")
    if sum(counts) > n:
        # rounding can overshoot by one per part
        if frac_total <= 1.0 + 1e-12 and sum(counts) - n <= len(counts):
            while sum(counts) > n:
                counts[int(np.argmax(counts))] -= 1
        else:
            raise ValueError(f"split sizes {counts} exceed the {n} available samples")
    perm = np.random.default_rng(rng).permutation(n)
    out, start = [], 0
    for c in counts:
        out.append(dataset.subset(np.sort(perm[start:start + c])))
        start += c
    return out


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, dataset: Dataset) -> Dataset:
        X = dataset.X.toarray() if dataset.is_sparse else dataset.X
        return Dataset((X - self.mean) / self.scale, dataset.y, dataset.name, dataset.n_features)


def standardize(train: Dataset, others: Iterable[Dataset] = ()) -> tuple[list[Dataset], Standardizer]:
    """Zero-mean / unit-variance scaling fitted on ``train`` only.

    Zero-variance features are centered but not divided.  Outputs are dense.
    """
    if train.n_samples == 0:
        raise ValueError("cannot standardize on an empty training set")
    X = train.X.toarray() if train.is_sparse else train.X
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    rec = Standardizer(mean, scale)
    return [rec.apply(train)] + [rec.apply(d) for d in others], rec


def subsample(dataset: Dataset, m: int, rng) -> Dataset:
    if m >= dataset.n_samples:
        return dataset
    idx = np.sort(np.random.default_rng(rng).choice(dataset.n_samples, size=m, replace=False))
    return dataset.subset(idx)


def stack(datasets: Sequence[Dataset]) -> Dataset:
    if any(d.is_sparse for d in datasets):
        X = sp.vstack([sp.csr_matrix(d.X) for d in datasets], format="csr")
    else:
        X = np.vstack([d.X for d in datasets])
    return Dataset(X, np.concatenate([d.y for d in datasets]), datasets[0].name)
