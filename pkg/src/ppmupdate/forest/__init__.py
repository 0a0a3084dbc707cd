"""Batch and incremental random forests for binary outcome prediction."""
from ._backend import BACKEND, get_kernels, has_compiled
from .batch import (BatchForest, BatchHyperparameters, ForestError, Tree, gini,
                    train_batch)
from .incremental import (HoeffdingTree, IncHyperparameters, IncrementalForest,
                          hoeffding_bound, train_incremental_initial, update)
from .model_io import ModelFormatError, deserialize, serialize


def predict_proba(model, features, backend=None):
    """Positive-class probability for one feature vector or a matrix of them."""
    import numpy as np

    X = np.asarray(features, dtype=np.float64)
    out = model.predict_proba(np.atleast_2d(X), backend=backend)
    return float(out[0]) if X.ndim == 1 else out


__all__ = [
    "BACKEND", "get_kernels", "has_compiled",
    "BatchForest", "BatchHyperparameters", "ForestError", "Tree", "gini", "train_batch",
    "HoeffdingTree", "IncHyperparameters", "IncrementalForest", "hoeffding_bound",
    "train_incremental_initial", "update",
    "ModelFormatError", "serialize", "deserialize", "predict_proba",
]
