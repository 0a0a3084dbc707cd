"""Batch random forest: bootstrap CART trees with Gini splits and feature subsampling."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import _backend
from ._rng import stream_array, to_unit, tree_key


class ForestError(ValueError):
    pass


def gini(class_counts) -> float:
    """Gini impurity ``1 - sum p_c^2`` of a vector of class counts."""
    c = np.asarray(class_counts, dtype=np.float64)
    if np.any(c < 0):
        raise ForestError("class counts must be non-negative")
    total = c.sum()
    if total <= 0:
        raise ForestError("gini of all-zero counts is undefined")
    p = c / total
    return float(1.0 - np.sum(p * p))


def default_threads() -> int:
    env = os.environ.get("PPMUPDATE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def map_trees(fn, n, n_threads=None):
    n_threads = default_threads() if n_threads is None else max(1, int(n_threads))
    if n_threads == 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        return list(pool.map(fn, range(n)))


def as_xy(data, y=None):
    """Accept an EncodedDataset, an (X, y) pair, or X plus y."""
    if y is None:
        if hasattr(data, "X") and hasattr(data, "y"):
            X, y = data.X, data.y
        else:
            X, y = data
    else:
        X = data
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y).astype(bool)
    if X.size == 0 and X.ndim == 1:
        X = X.reshape(0, 0)
    if X.ndim != 2 or len(X) != len(y):
        raise ForestError(f"bad training data shapes {X.shape} / {y.shape}")
    return X, y


@dataclass(frozen=True)
class BatchHyperparameters:
    n_trees: int = 100
    max_depth: int = 10
    min_samples_leaf: int = 1
    max_features_fraction: float = 0.5

    def __post_init__(self):
        if int(self.n_trees) < 1 or int(self.max_depth) < 1 or int(self.min_samples_leaf) < 1:
            raise ForestError(f"invalid batch hyperparameters {self}")
        if not 0.0 < float(self.max_features_fraction) <= 1.0:
            raise ForestError("max_features_fraction must be in (0, 1]")
        object.__setattr__(self, "n_trees", int(self.n_trees))
        object.__setattr__(self, "max_depth", int(self.max_depth))
        object.__setattr__(self, "min_samples_leaf", int(self.min_samples_leaf))
        object.__setattr__(self, "max_features_fraction", float(self.max_features_fraction))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Tree:
    feature: np.ndarray     # -1 marks a leaf
    threshold: np.ndarray   # go left iff x[feature] <= threshold
    left: np.ndarray
    right: np.ndarray
    pos: np.ndarray         # (bootstrap-weighted) positive count per node
    neg: np.ndarray

    @property
    def value(self) -> np.ndarray:
        return (self.pos + 1.0) / (self.pos + self.neg + 2.0)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


class BatchForest:
    variant = "batch"

    def __init__(self, hp: BatchHyperparameters, seed: int, schema_width: int, trees: list):
        self.hp = hp
        self.seed = int(seed)
        self.schema_width = int(schema_width)
        self.trees = trees

    def predict_proba(self, X, backend=None) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        if X.shape[1] != self.schema_width:
            raise ForestError(f"feature width {X.shape[1]} != model width {self.schema_width}")
        k = _backend.get_kernels(backend)
        out = np.zeros(len(X), dtype=np.float64)
        for t in self.trees:
            k.predict_tree_add(X, t.feature, t.threshold, t.left, t.right, t.value, out)
        return out / len(self.trees)


def bootstrap_counts(key: int, n: int) -> np.ndarray:
    """Multiplicity of each of ``n`` rows in a size-``n`` bootstrap sample."""
    u = to_unit(stream_array(key, np.arange(n, dtype=np.uint64)))
    idx = np.minimum((u * n).astype(np.int64), n - 1)
    return np.bincount(idx, minlength=n).astype(np.float64)


def unique_rows(X):
    """Distinct rows in first-occurrence order plus the row -> unique index map."""
    index, first = {}, []
    inv = np.empty(len(X), dtype=np.int64)
    for i, row in enumerate(X):
        k = row.tobytes()
        j = index.get(k)
        if j is None:
            j = index[k] = len(first)
            first.append(i)
        inv[i] = j
    return X[first], inv


def train_batch(data, hp: BatchHyperparameters, seed: int, *, bootstrap: bool = True,
                backend=None, n_threads=None) -> BatchForest:
    """Fit a batch forest; a pure function of (data, hp, seed).

    Identical feature rows are merged into weighted unique rows before growing
    trees, which leaves every split decision unchanged.
    """
    X, y = as_xy(data)
    n, W = X.shape
    if n == 0:
        raise ForestError("cannot train on an empty dataset")
    k = _backend.get_kernels(backend)
    Xu, inv = unique_rows(X)
    XT = np.ascontiguousarray(Xu.T)
    U = len(Xu)
    yf = y.astype(np.float64)
    mtry = max(1, math.ceil(hp.max_features_fraction * W))

    def grow(t):
        key = tree_key(seed, t)
        counts = bootstrap_counts(key, n) if bootstrap else np.ones(n)
        pos_w = np.bincount(inv, weights=counts * yf, minlength=U)
        neg_w = np.bincount(inv, weights=counts * (1.0 - yf), minlength=U)
        rows = np.flatnonzero(pos_w + neg_w > 0).astype(np.int32)
        arrays = k.build_tree(XT, pos_w, neg_w, rows, hp.max_depth,
                              float(hp.min_samples_leaf), mtry, key)
        return Tree(*arrays)

    trees = map_trees(grow, hp.n_trees, n_threads)
    return BatchForest(hp, seed, W, trees)
