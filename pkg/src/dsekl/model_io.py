"""Plain-text model files.

Kernel expansion models::

    DSEKL-MODEL-v1
    n_train <N>
    n_features <D>
    kernel <rbf|linear> <sigma>
    nnz <M>
    <train index> <alpha> <label> <feature>:<value> ...     (M lines, 1-based features)

Random-feature models::

    DSEKL-RKS-v1
    n_features <D>
    n_components <J>
    sigma <sigma>
    <weight> <phase> <frequency_1> ... <frequency_D>         (J lines)

Floats are written with ``repr`` so files round-trip exactly.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .baselines import LinearModel, RKSFeatureMap
from .data import Dataset
from .kernels import KernelFamily, KernelSpec
from .objective import DualModel

MODEL_HEADER = "DSEKL-MODEL-v1"
RKS_HEADER = "DSEKL-RKS-v1"


class ModelFormatError(ValueError):
    pass


def _f(v) -> str:
    return repr(float(v))


def write_model(model, fh) -> None:
    if isinstance(model, LinearModel):
        _write_rks(model, fh)
        return
    ds = model.expansion
    support = model.support
    X = ds.X if ds.is_sparse else sp.csr_matrix(ds.X)
    index = model.train_indices
    fh.write(f"{MODEL_HEADER}\n")
    fh.write(f"n_train {model.n_train or ds.n_samples}\n")
    fh.write(f"n_features {ds.n_features}\n")
    fh.write(f"kernel {model.spec.family.value} {_f(model.spec.sigma)}\n")
    fh.write(f"nnz {support.size}\n")
    for j in support:
        start, end = X.indptr[j], X.indptr[j + 1]
        feats = " ".join(f"{c + 1}:{_f(v)}" for c, v in zip(X.indices[start:end], X.data[start:end]) if v != 0.0)
        tid = int(index[j]) if index is not None else int(j)
        fh.write(f"{tid} {_f(model.alpha[j])} {int(ds.y[j]):+d} {feats}".rstrip() + "\n")


def _write_rks(model: LinearModel, fh) -> None:
    fm = model.feature_map
    fh.write(f"{RKS_HEADER}\n")
    fh.write(f"n_features {fm.n_features}\n")
    fh.write(f"n_components {fm.n_components}\n")
    fh.write(f"sigma {_f(fm.sigma)}\n")
    for w, b, row in zip(model.weights, fm.phases, fm.frequencies):
        fh.write(" ".join([_f(w), _f(b)] + [_f(v) for v in row]) + "\n")


def _field(line: str, key: str) -> list[str]:
    parts = line.split()
    if not parts or parts[0] != key:
        raise ModelFormatError(f"expected '{key} ...', got {line.strip()!r}")
    return parts[1:]


def read_model(fh):
    lines = fh.read().splitlines()
    if not lines:
        raise ModelFormatError("empty model file")
    header = lines[0].strip()
    if header == RKS_HEADER:
        return _read_rks(lines)
    if header != MODEL_HEADER:
        raise ModelFormatError(f"unknown model header {header!r}")
    n_train = int(_field(lines[1], "n_train")[0])
    n_features = int(_field(lines[2], "n_features")[0])
    family, sigma = _field(lines[3], "kernel")
    nnz = int(_field(lines[4], "nnz")[0])
    body = lines[5:5 + nnz]
    if len(body) != nnz:
        raise ModelFormatError(f"expected {nnz} coefficient lines, found {len(body)}")
    idx, alpha, labels = [], [], []
    indptr, cols, vals = [0], [], []
    for line in body:
        tok = line.split()
        idx.append(int(tok[0]))
        alpha.append(float(tok[1]))
        labels.append(float(tok[2]))
        for item in tok[3:]:
            c, v = item.split(":")
            cols.append(int(c) - 1)
            vals.append(float(v))
        indptr.append(len(cols))
    X = sp.csr_matrix((np.array(vals, dtype=float), np.array(cols, dtype=np.int64), np.array(indptr, dtype=np.int64)),
                      shape=(nnz, n_features))
    spec = KernelSpec(KernelFamily(family), float(sigma))
    return DualModel(np.array(alpha), Dataset(X, np.array(labels), "support", n_features), spec,
                     train_indices=np.array(idx, dtype=np.int64), n_train=n_train)


def _read_rks(lines) -> LinearModel:
    n_features = int(_field(lines[1], "n_features")[0])
    n_comp = int(_field(lines[2], "n_components")[0])
    sigma = float(_field(lines[3], "sigma")[0])
    rows = [[float(v) for v in line.split()] for line in lines[4:4 + n_comp]]
    if len(rows) != n_comp or any(len(r) != n_features + 2 for r in rows):
        raise ModelFormatError("malformed random-feature rows")
    arr = np.array(rows).reshape(n_comp, n_features + 2)
    fmap = RKSFeatureMap(arr[:, 2:].copy(), arr[:, 1].copy(), sigma)
    return LinearModel(arr[:, 0].copy(), fmap)


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        write_model(model, fh)


def load_model(path):
    with open(path) as fh:
        return read_model(fh)
