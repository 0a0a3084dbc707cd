"""Incremental forest: Hoeffding trees with online (Poisson) bagging.

Each tree owns a fixed random feature subspace and a counter-based Poisson(1)
stream, so feeding A then B gives exactly the model obtained by feeding A++B.
"""
from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _backend
from ._rng import POISSON_SALT, SUBSPACE_SALT, ranked_features, tree_key
from .batch import ForestError, as_xy, map_trees


def hoeffding_bound(value_range: float, confidence: float, n: float) -> float:
    """epsilon = sqrt(R^2 ln(1/delta) / (2n))."""
    if not value_range > 0:
        raise ForestError("range must be positive")
    if not 0.0 < confidence < 1.0:
        raise ForestError("confidence delta must lie in (0, 1)")
    if not n >= 1:
        raise ForestError("n must be >= 1")
    return math.sqrt(value_range * value_range * math.log(1.0 / confidence) / (2.0 * n))


@dataclass(frozen=True)
class IncHyperparameters:
    n_trees: int = 10
    grace_period: int = 200
    split_confidence: float = 1e-7
    tie_threshold: float = 0.05
    max_features_fraction: float = 0.5

    def __post_init__(self):
        if int(self.n_trees) < 1 or int(self.grace_period) < 1:
            raise ForestError(f"invalid incremental hyperparameters {self}")
        if not 0.0 < float(self.split_confidence) < 1.0:
            raise ForestError("split_confidence must be in (0, 1)")
        if not 0.0 <= float(self.tie_threshold) < 1.0:
            raise ForestError("tie_threshold must be in [0, 1)")
        if not 0.0 < float(self.max_features_fraction) <= 1.0:
            raise ForestError("max_features_fraction must be in (0, 1]")
        object.__setattr__(self, "n_trees", int(self.n_trees))
        object.__setattr__(self, "grace_period", int(self.grace_period))
        object.__setattr__(self, "split_confidence", float(self.split_confidence))
        object.__setattr__(self, "tie_threshold", float(self.tie_threshold))
        object.__setattr__(self, "max_features_fraction", float(self.max_features_fraction))

    def to_dict(self) -> dict:
        return asdict(self)


class HoeffdingTree:
    """Array-backed Hoeffding tree; leaves hold per-class Gaussian sufficient statistics."""

    NODE_ARRAYS = ("node_feature", "node_threshold", "node_left", "node_right", "node_leaf")
    LEAF_ARRAYS = ("leaf_node", "leaf_class", "leaf_seen", "leaf_stats", "leaf_min",
                   "leaf_max", "leaf_nonbinary")

    def __init__(self, key: int, subspace: np.ndarray, node_cap: int = 64, leaf_cap: int = 32):
        self.key = int(key)
        self.subspace = np.ascontiguousarray(subspace, dtype=np.int32)
        m = len(self.subspace)
        self.meta = np.array([1, 1, 0], dtype=np.int64)  # n_nodes, n_leaves, stream counter
        self.node_feature = np.full(node_cap, -1, dtype=np.int32)
        self.node_threshold = np.zeros(node_cap)
        self.node_left = np.full(node_cap, -1, dtype=np.int32)
        self.node_right = np.full(node_cap, -1, dtype=np.int32)
        self.node_leaf = np.full(node_cap, -1, dtype=np.int32)
        self.leaf_node = np.full(leaf_cap, -1, dtype=np.int32)
        self.leaf_class = np.zeros((leaf_cap, 2))
        self.leaf_seen = np.zeros(leaf_cap)
        self.leaf_stats = np.zeros((leaf_cap, m, 2, 3))
        self.leaf_min = np.full((leaf_cap, m), np.inf)
        self.leaf_max = np.full((leaf_cap, m), -np.inf)
        self.leaf_nonbinary = np.zeros((leaf_cap, m), dtype=np.uint8)
        self.node_leaf[0] = 0
        self.leaf_node[0] = 0

    @property
    def n_nodes(self) -> int:
        return int(self.meta[0])

    @property
    def n_leaves(self) -> int:
        return int(self.meta[1])

    @property
    def counter(self) -> int:
        return int(self.meta[2])

    def _grow(self):
        def enlarge(a, fill):
            extra = np.full((len(a),) + a.shape[1:], fill, dtype=a.dtype)
            return np.ascontiguousarray(np.concatenate([a, extra]))
        self.node_feature = enlarge(self.node_feature, -1)
        self.node_threshold = enlarge(self.node_threshold, 0.0)
        self.node_left = enlarge(self.node_left, -1)
        self.node_right = enlarge(self.node_right, -1)
        self.node_leaf = enlarge(self.node_leaf, -1)
        self.leaf_node = enlarge(self.leaf_node, -1)
        self.leaf_class = enlarge(self.leaf_class, 0.0)
        self.leaf_seen = enlarge(self.leaf_seen, 0.0)
        self.leaf_stats = enlarge(self.leaf_stats, 0.0)
        self.leaf_min = enlarge(self.leaf_min, np.inf)
        self.leaf_max = enlarge(self.leaf_max, -np.inf)
        self.leaf_nonbinary = enlarge(self.leaf_nonbinary, 0)

    def learn(self, X, y, hp: IncHyperparameters, kernels):
        pos, end = 0, len(X)
        while pos < end:
            pos = kernels.hoeffding_learn(
                X, y, pos, end,
                self.node_feature, self.node_threshold, self.node_left, self.node_right,
                self.node_leaf, self.leaf_node, self.leaf_class, self.leaf_seen,
                self.leaf_stats, self.leaf_min, self.leaf_max, self.leaf_nonbinary,
                self.subspace, self.meta, self.key ^ POISSON_SALT,
                float(hp.grace_period), hp.split_confidence, hp.tie_threshold)
            if pos < end:
                self._grow()

    def node_values(self) -> np.ndarray:
        n = self.n_nodes
        vals = np.zeros(n)
        leaf = self.node_leaf[:n]
        is_leaf = leaf >= 0
        cls = self.leaf_class[leaf[is_leaf]]
        vals[is_leaf] = (cls[:, 1] + 1.0) / (cls[:, 0] + cls[:, 1] + 2.0)
        return vals

    def predict_add(self, X, out, kernels):
        n = self.n_nodes
        kernels.predict_tree_add(X, self.node_feature[:n], self.node_threshold[:n],
                                 self.node_left[:n], self.node_right[:n],
                                 self.node_values(), out)

    # trimmed view used by serialisation and equality checks
    def state(self) -> dict:
        n, L = self.n_nodes, self.n_leaves
        out = {"subspace": self.subspace, "meta": self.meta}
        for name in self.NODE_ARRAYS:
            out[name] = getattr(self, name)[:n]
        for name in self.LEAF_ARRAYS:
            out[name] = getattr(self, name)[:L]
        return out

    @classmethod
    def from_state(cls, key: int, st: dict) -> "HoeffdingTree":
        n, L = int(st["meta"][0]), int(st["meta"][1])
        t = cls(key, st["subspace"], node_cap=max(64, 2 * n), leaf_cap=max(32, 2 * L))
        t.meta = np.array(st["meta"], dtype=np.int64)
        for name in cls.NODE_ARRAYS:
            getattr(t, name)[:n] = st[name]
        for name in cls.LEAF_ARRAYS:
            getattr(t, name)[:L] = st[name]
        return t


class IncrementalForest:
    variant = "incremental"

    def __init__(self, hp: IncHyperparameters, seed: int, schema_width: int, trees=None):
        self.hp = hp
        self.seed = int(seed)
        self.schema_width = int(schema_width)
        if trees is None:
            m = max(1, math.ceil(hp.max_features_fraction * schema_width))
            trees = []
            for t in range(hp.n_trees):
                key = tree_key(self.seed, t)
                sub = ranked_features(key ^ SUBSPACE_SALT, schema_width)[:m]
                trees.append(HoeffdingTree(key, sub))
        self.trees = trees

    @property
    def n_seen(self) -> int:
        return self.trees[0].counter if self.trees else 0

    def learn(self, X, y, backend=None, n_threads=None):
        k = _backend.get_kernels(backend)
        yb = np.ascontiguousarray(y, dtype=np.uint8)
        map_trees(lambda i: self.trees[i].learn(X, yb, self.hp, k), len(self.trees), n_threads)
        return self

    def predict_proba(self, X, backend=None) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        if X.shape[1] != self.schema_width:
            raise ForestError(f"feature width {X.shape[1]} != model width {self.schema_width}")
        k = _backend.get_kernels(backend)
        out = np.zeros(len(X))
        for t in self.trees:
            t.predict_add(X, out, k)
        return out / len(self.trees)


def update(model, data, y=None, *, inplace: bool = False, backend=None, n_threads=None):
    """Feed labelled instances, in order, into an incremental model.

    Returns the updated model; the input model is left untouched unless
    ``inplace`` is true.
    """
    if not isinstance(model, IncrementalForest):
        raise ForestError(f"{type(model).__name__} has no update function")
    X, yy = as_xy(data, y)
    if len(X) and X.shape[1] != model.schema_width:
        raise ForestError(f"feature width {X.shape[1]} != model width {model.schema_width}")
    target = model if inplace else copy.deepcopy(model)
    if len(X):
        target.learn(X, yy, backend=backend, n_threads=n_threads)
    return target


def train_incremental_initial(data, hp: IncHyperparameters, seed: int, *, backend=None,
                              n_threads=None) -> IncrementalForest:
    X, y = as_xy(data)
    if len(X) == 0:
        raise ForestError("cannot train on an empty dataset")
    model = IncrementalForest(hp, seed, X.shape[1])
    return update(model, X, y, inplace=True, backend=backend, n_threads=n_threads)
