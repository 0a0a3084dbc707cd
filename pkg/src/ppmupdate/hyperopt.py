"""Tree-structured Parzen Estimator search maximising a scalar objective.

Each parameter is modelled independently: past trials are ranked by
objective, the top ``gamma`` fraction forms the "good" set, and candidates
drawn from the good-set Parzen density are scored by l(x)/g(x).
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

logger = logging.getLogger(__name__)


class SearchSpaceError(ValueError):
    pass


@dataclass(frozen=True)
class Param:
    name: str
    kind: str          # "int" or "real"
    lo: float
    hi: float
    scale: str = "linear"

    def __post_init__(self):
        if self.kind not in ("int", "real"):
            raise SearchSpaceError(f"{self.name}: kind must be int or real")
        if self.scale not in ("linear", "log"):
            raise SearchSpaceError(f"{self.name}: scale must be linear or log")
        if not self.lo < self.hi:
            raise SearchSpaceError(f"{self.name}: need lo < hi, got [{self.lo}, {self.hi}]")
        if self.scale == "log" and self.lo <= 0:
            raise SearchSpaceError(f"{self.name}: log scale requires lo > 0")

    # internal (possibly log) coordinates
    @property
    def bounds(self):
        if self.scale == "log":
            return math.log(self.lo), math.log(self.hi)
        return float(self.lo), float(self.hi)

    def to_internal(self, v):
        return math.log(v) if self.scale == "log" else float(v)

    def from_internal(self, z):
        v = math.exp(z) if self.scale == "log" else z
        v = min(max(v, self.lo), self.hi)
        if self.kind == "int":
            return int(min(max(round(v), math.ceil(self.lo)), math.floor(self.hi)))
        return float(v)

    def to_dict(self):
        return {"name": self.name, "kind": self.kind, "bounds": [self.lo, self.hi],
                "scale": self.scale}

    @classmethod
    def from_dict(cls, d):
        lo, hi = d["bounds"]
        return cls(d["name"], d.get("kind", "real"), lo, hi, d.get("scale", "linear"))


@dataclass(frozen=True)
class SearchSpace:
    params: tuple

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise SearchSpaceError("duplicate parameter names")

    @property
    def names(self):
        return [p.name for p in self.params]

    def to_list(self):
        return [p.to_dict() for p in self.params]

    @classmethod
    def from_list(cls, items):
        return cls(tuple(Param.from_dict(d) for d in items))


def default_batch_space() -> SearchSpace:
    return SearchSpace((
        Param("n_trees", "int", 10, 500, "log"),
        Param("max_depth", "int", 2, 30),
        Param("min_samples_leaf", "int", 1, 50, "log"),
        Param("max_features_fraction", "real", 0.05, 1.0),
    ))


def default_incremental_space() -> SearchSpace:
    return SearchSpace((
        Param("n_trees", "int", 5, 100, "log"),
        Param("grace_period", "int", 50, 1000, "log"),
        Param("split_confidence", "real", 1e-7, 1e-2, "log"),
        Param("tie_threshold", "real", 0.01, 0.2),
        Param("max_features_fraction", "real", 0.05, 1.0),
    ))


@dataclass
class Trial:
    params: dict
    objective: float
    duration: float
    failed: bool = False
    error: str = ""

    def __post_init__(self):
        if not 0.0 <= self.objective <= 1.0:
            raise SearchSpaceError(f"objective {self.objective} outside [0, 1]")


@dataclass
class TPEConfig:
    gamma: float = 0.25
    n_candidates: int = 24
    n_startup: int = 20


def _parzen_logpdf(x, centers, bw, lo, hi):
    """Log density of an equal-weight mixture of Gaussians truncated to [lo, hi]."""
    x = np.asarray(x)[:, None]
    c = np.asarray(centers)[None, :]
    mass = ndtr((hi - c) / bw) - ndtr((lo - c) / bw)
    dens = np.exp(-0.5 * ((x - c) / bw) ** 2) / (bw * math.sqrt(2 * math.pi) * mass)
    return np.log(dens.mean(axis=1) + 1e-300)


def _sample_truncated(rng, centers, bw, lo, hi, n):
    out = np.empty(n)
    for i in range(n):
        c = centers[rng.integers(len(centers))]
        while True:  # rejection sampling; the window always holds >= a few % of the mass
            v = rng.normal(c, bw)
            if lo <= v <= hi:
                out[i] = v
                break
    return out


def suggest(history, space: SearchSpace, rng: np.random.Generator,
            config: TPEConfig | None = None) -> dict:
    cfg = config or TPEConfig()
    ok = [t for t in history if not t.failed]
    if len(history) < cfg.n_startup or not ok:
        return {p.name: p.from_internal(rng.uniform(*p.bounds)) for p in space.params}
    objs = np.array([t.objective for t in ok])
    order = np.argsort(-objs, kind="stable")
    n_good = max(1, int(math.ceil(cfg.gamma * len(ok))))
    good_idx, bad_idx = order[:n_good], order[n_good:]
    out = {}
    for p in space.params:
        lo, hi = p.bounds
        span = hi - lo
        vals = np.array([p.to_internal(t.params[p.name]) for t in ok])
        good = vals[good_idx]
        bad = vals[bad_idx] if len(bad_idx) else np.array([0.5 * (lo + hi)])
        bw_g = max(span / len(good), 0.01 * span)
        bw_b = max(span / len(bad), 0.01 * span)
        cand = _sample_truncated(rng, good, bw_g, lo, hi, cfg.n_candidates)
        score = _parzen_logpdf(cand, good, bw_g, lo, hi) - _parzen_logpdf(cand, bad, bw_b, lo, hi)
        out[p.name] = p.from_internal(float(cand[int(np.argmax(score))]))
    return out


def optimize(objective_fn, space: SearchSpace, max_iterations: int, seed: int,
             config: TPEConfig | None = None):
    """Run ``max_iterations`` suggest/evaluate rounds; returns (best_params, trials).

    A trial whose objective raises (or returns a non-finite value) is recorded
    with objective 0 and ``failed=True``; the search carries on.
    """
    if max_iterations < 1:
        raise SearchSpaceError("max_iterations must be >= 1")
    rng = np.random.default_rng(seed)
    trials: list[Trial] = []
    for it in range(max_iterations):
        params = suggest(trials, space, rng, config)
        start = time.perf_counter()
        try:
            value = float(objective_fn(params))
            if not math.isfinite(value):
                raise ValueError(f"non-finite objective {value}")
            failed, err = False, ""
        except Exception as exc:  # a failed trial must not end the search
            logger.warning("trial %d failed: %s", it, exc)
            value, failed, err = 0.0, True, f"{type(exc).__name__}: {exc}"
        trials.append(Trial(params, min(max(value, 0.0), 1.0), time.perf_counter() - start,
                            failed, err))
    best = max(range(len(trials)), key=lambda i: (trials[i].objective, -i))
    return trials[best].params, trials


def write_trials_csv(path, trials, space: SearchSpace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", *space.names, "objective", "seconds", "failed"])
        for i, t in enumerate(trials):
            w.writerow([i, *(t.params[n] for n in space.names), repr(t.objective),
                        f"{t.duration:.6f}", int(t.failed)])
