"""Scoring metrics (AUC, accuracy, macro F1) and build-time accounting."""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


def _split(scored, labels=None):
    if labels is None:
        pairs = list(scored)
        s = np.array([p[0] for p in pairs], dtype=np.float64)
        y = np.array([bool(p[1]) for p in pairs], dtype=bool)
    else:
        s = np.asarray(scored, dtype=np.float64).reshape(-1)
        y = np.asarray(labels).astype(bool).reshape(-1)
    if len(s) != len(y):
        raise MetricError(f"{len(s)} scores but {len(y)} labels")
    return s, y


def auc(scored, labels=None) -> float:
    """Area under the ROC curve via the Mann-Whitney rank-sum statistic.

    ``scored`` is either a sequence of (score, label) pairs or a score array
    with ``labels`` given separately. Ties receive average ranks, which is
    the same as counting a tied positive/negative pair as one half.
    """
    s, y = _split(scored, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC is undefined unless both classes are present")
    ranks = rankdata(s, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion_at(scored, labels=None, threshold: float = 0.5) -> dict:
    s, y = _split(scored, labels)
    pred = s >= threshold
    return {
        "TP": int(np.sum(pred & y)),
        "TN": int(np.sum(~pred & ~y)),
        "FP": int(np.sum(pred & ~y)),
        "FN": int(np.sum(~pred & y)),
    }


def accuracy_from_counts(c: dict) -> float:
    total = c["TP"] + c["TN"] + c["FP"] + c["FN"]
    return (c["TP"] + c["TN"]) / total if total else 0.0


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    # a class that is neither present nor predicted is perfectly handled
    return 2 * tp / denom if denom else 1.0


def macro_f1_from_counts(c: dict) -> float:
    pos = f1_from_counts(c["TP"], c["FP"], c["FN"])
    neg = f1_from_counts(c["TN"], c["FN"], c["FP"])
    return (pos + neg) / 2.0


def accuracy(scored, labels=None, threshold: float = 0.5) -> float:
    return accuracy_from_counts(confusion_at(scored, labels, threshold))


def f_measure(scored, labels=None, threshold: float = 0.5) -> float:
    """Macro-averaged F1 over the positive and negative class."""
    return macro_f1_from_counts(confusion_at(scored, labels, threshold))


def score_report(scores, labels, threshold: float = 0.5) -> dict:
    c = confusion_at(scores, labels, threshold)
    try:
        a = auc(scores, labels)
    except MetricError:
        a = float("nan")
    return {"auc": a, "f1": macro_f1_from_counts(c), "accuracy": accuracy_from_counts(c),
            "confusion": c, "n": int(sum(c.values()))}


class Stopwatch:
    """Accumulates monotonic wall-clock seconds per named section.

    >>> sw = Stopwatch()
    >>> with sw.section("train"):
    ...     pass
    >>> sw.seconds("train") >= 0
    True
    """

    def __init__(self):
        self.totals: dict[str, float] = {}

    @contextmanager
    def section(self, name: str):
        start = time.perf_counter()
        try:
            yield self
        finally:
            self.totals[name] = self.totals.get(name, 0.0) + (time.perf_counter() - start)

    def seconds(self, name: str) -> float:
        return self.totals.get(name, 0.0)

    def __call__(self, name: str):
        return self.section(name)


@dataclass
class TimeBreakdown:
    m0_build: float = 0.0
    retrain: float = 0.0
    hyperopt: float = 0.0
    incremental_update: float = 0.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise MetricError(f"{k} must be non-negative, got {v}")

    def total(self, strategy: str) -> float:
        s = strategy.upper()
        if s == "S0":
            return self.m0_build
        if s == "S1":
            return self.m0_build + self.retrain
        if s == "S2":
            return self.m0_build + self.hyperopt + self.retrain
        if s == "S3":
            return self.m0_build + self.incremental_update
        raise MetricError(f"unknown strategy {strategy!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def format_hms(seconds: float) -> str:
    """Render seconds as hh:mm:ss (fractional seconds kept to 3 decimals)."""
    seconds = max(0.0, float(seconds))
    h, rem = divmod(seconds, 3600)
    m, s = divmod(rem, 60)
    return f"{int(h):02d}:{int(m):02d}:{s:06.3f}"
