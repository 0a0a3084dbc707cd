"""Temporal splits, the four model-update strategies and experiment orchestration.

Strategies
----------
S0  do nothing: M0 is tuned and trained on TR0 only.
S1  re-train on TR0 + TR1 with M0's hyperparameters.
S2  full re-train: fresh hyperparameter search and training on TR0 + TR1.
S3  incremental: an incremental M0 (tuned and trained on TR0) is updated
    with the TR1 prefixes in start-time order.

Only hyperparameter search loops, train calls and update calls are timed;
parsing, labelling and encoding are not.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import forest
from .driftgen import GeneratorConfig, generate
from .encoding import encode_set, fit_schema
from .eventlog import EventLog, read_log
from .hyperopt import (SearchSpace, TPEConfig, default_batch_space,
                       default_incremental_space, optimize)
from .metrics import MetricError, Stopwatch, TimeBreakdown, auc, score_report
from .outcome import FastCaseLabeler, label_log, make_labeler

logger = logging.getLogger(__name__)

STRATEGIES = ("S0", "S1", "S2", "S3")


class HarnessError(RuntimeError):
    pass


# --- configuration ---------------------------------------------------------

@dataclass(frozen=True)
class SplitSetting:
    tr0: float
    tr1: float
    te: float
    name: str = "custom"

    def __post_init__(self):
        if min(self.tr0, self.tr1, self.te) <= 0:
            raise HarnessError("split fractions must be positive")
        if abs(self.tr0 + self.tr1 + self.te - 1.0) > 1e-9:
            raise HarnessError("split fractions must sum to 1")

    @classmethod
    def A(cls):
        return cls(0.10, 0.70, 0.20, "A")

    @classmethod
    def B(cls):
        return cls(0.40, 0.40, 0.20, "B")

    @classmethod
    def parse(cls, value) -> "SplitSetting":
        if isinstance(value, SplitSetting):
            return value
        if isinstance(value, str):
            if value.upper() == "A":
                return cls.A()
            if value.upper() == "B":
                return cls.B()
            raise HarnessError(f"unknown split setting {value!r} (use A, B or fractions)")
        return cls(float(value["tr0"]), float(value["tr1"]), float(value["te"]),
                   value.get("name", "custom"))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentConfig:
    log_path: str | None = None
    generator: dict | None = None
    labeler: object = "fast_case"
    split: object = "A"
    max_prefix_len: int = 20
    max_iterations: int = 50
    tpe: dict = field(default_factory=dict)
    batch_space: list | None = None
    incremental_space: list | None = None
    validation_fraction: float = 0.20
    seed: int = 42
    threads: int | None = None
    dataset_name: str = ""

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise HarnessError("validation_fraction must lie in (0, 1)")
        if self.max_prefix_len < 1:
            raise HarnessError("max_prefix_len must be >= 1")
        if self.max_iterations < 1:
            raise HarnessError("max_iterations must be >= 1")
        self.split = SplitSetting.parse(self.split)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known - {"out_dir"}
        if unknown:
            raise HarnessError(f"unknown experiment config keys {sorted(unknown)}")
        return cls(**{k: v for k, v in d.items() if k in known})

    @property
    def batch_search_space(self) -> SearchSpace:
        return (SearchSpace.from_list(self.batch_space) if self.batch_space
                else default_batch_space())

    @property
    def incremental_search_space(self) -> SearchSpace:
        return (SearchSpace.from_list(self.incremental_space) if self.incremental_space
                else default_incremental_space())

    @property
    def tpe_config(self) -> TPEConfig:
        return TPEConfig(**self.tpe)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split"] = self.split.to_dict()
        d["batch_space"] = self.batch_search_space.to_list()
        d["incremental_space"] = self.incremental_search_space.to_list()
        d["tpe"] = asdict(self.tpe_config)
        return d

    def load_log(self) -> EventLog:
        if self.log_path:
            return read_log(self.log_path)
        return generate(GeneratorConfig.from_dict(self.generator or {}))


# --- splitting -------------------------------------------------------------

def _floor(x: float) -> int:
    return int(math.floor(x + 1e-9))


def split(log, setting) -> tuple:
    """Contiguous start-time slices (TR0, TR1, TE); floor rounding, remainder to TE."""
    setting = SplitSetting.parse(setting)
    traces = sorted(log, key=lambda t: t.start_time)
    n = len(traces)
    if n < 10:
        raise HarnessError(f"log has {n} traces; at least 10 are needed to split")
    n0 = _floor(setting.tr0 * n)
    n1 = _floor(setting.tr1 * n)
    tr0, tr1, te = traces[:n0], traces[n0:n0 + n1], traces[n0 + n1:]
    if not (tr0 and tr1 and te):
        raise HarnessError(f"split {setting} of {n} traces leaves an empty slice")
    return tr0, tr1, te


def sample_validation(train, fraction: float = 0.20, rng=None) -> tuple:
    """Uniform sample without replacement; both parts keep start-time order."""
    train = list(train)
    n = len(train)
    if n < 5:
        raise HarnessError(f"{n} training traces are too few to hold out a validation set")
    rng = rng if rng is not None else np.random.default_rng(0)
    k = _floor(fraction * n + 0.5)
    k = min(max(k, 1), n - 1)
    chosen = set(int(i) for i in rng.choice(n, size=k, replace=False))
    fit = [t for i, t in enumerate(train) if i not in chosen]
    val = [t for i, t in enumerate(train) if i in chosen]
    return fit, val


def gains(values) -> dict:
    """Relative gain (Mi - M0) / M0 for every model; M0's own gain is 0."""
    if not isinstance(values, dict):
        values = {f"M{i}": v for i, v in enumerate(values)}
    base = values["M0"]
    if base == 0:
        raise HarnessError("gain is undefined when M0's value is 0")
    return {k: (v - base) / base for k, v in values.items()}


# --- strategy results ------------------------------------------------------

@dataclass
class StrategyResult:
    strategy: str
    auc: float
    f1: float
    accuracy: float
    per_prefix_auc: dict
    times: TimeBreakdown
    hyperparameters: dict
    schema_fingerprint: str
    schema_width: int
    n_train_instances: int = 0
    trials: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def total_seconds(self) -> float:
        return self.times.total(self.strategy)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy, "auc": self.auc, "f1": self.f1,
            "accuracy": self.accuracy,
            "per_prefix_auc": {str(k): v for k, v in self.per_prefix_auc.items()},
            "times": self.times.to_dict(), "total_seconds": self.total_seconds,
            "hyperparameters": self.hyperparameters,
            "schema_fingerprint": self.schema_fingerprint, "schema_width": self.schema_width,
            "n_train_instances": self.n_train_instances,
            "trials": self.trials, **self.extra,
        }


@dataclass
class Context:
    """Everything the strategies share: the split, gold labels and cached encodings."""
    cfg: ExperimentConfig
    tr0: list
    tr1: list
    te: list
    labels: dict
    labeler_info: dict
    _encodings: dict = field(default_factory=dict)
    _schemas: dict = field(default_factory=dict)

    def schema(self, key, traces):
        if key not in self._schemas:
            self._schemas[key] = fit_schema(traces, self.cfg.max_prefix_len)
        return self._schemas[key]

    def encode(self, schema_key, part_key, traces):
        k = (schema_key, part_key)
        if k not in self._encodings:
            self._encodings[k] = encode_set(traces, self._schemas[schema_key], self.labels)
        return self._encodings[k]


def _evaluate(model, te_data, threads=None) -> dict:
    scores = model.predict_proba(te_data.X)
    rep = score_report(scores, te_data.y)
    per = {}
    for k in np.unique(te_data.prefix_lens):
        m = te_data.prefix_lens == k
        try:
            per[int(k)] = auc(scores[m], te_data.y[m])
        except MetricError:
            per[int(k)] = None
    rep["per_prefix_auc"] = per
    return rep


def _trial_dicts(trials):
    return [{"params": t.params, "objective": t.objective, "seconds": t.duration,
             "failed": t.failed, **({"error": t.error} if t.error else {})} for t in trials]


def _tune(cfg, family, fit_data, val_data, seed, sw, section):
    """Hyperparameter search maximising validation AUC (timed as ``section``)."""
    if family == "batch":
        space, make_hp = cfg.batch_search_space, forest.BatchHyperparameters

        def fit(hp):
            return forest.train_batch(fit_data, hp, seed, n_threads=cfg.threads)
    else:
        space, make_hp = cfg.incremental_search_space, forest.IncHyperparameters

        def fit(hp):
            return forest.train_incremental_initial(fit_data, hp, seed, n_threads=cfg.threads)

    def objective(params):
        model = fit(make_hp(**params))
        return auc(model.predict_proba(val_data.X), val_data.y)

    with sw.section(section):
        best, trials = optimize(objective, space, cfg.max_iterations, seed, cfg.tpe_config)
    return make_hp(**best), trials


def _validation_split(ctx, traces, stream):
    rng = np.random.default_rng([ctx.cfg.seed, stream])
    return sample_validation(traces, ctx.cfg.validation_fraction, rng)


def build_m0(ctx: Context, family: str = "batch") -> dict:
    """Tune on a TR0 validation sample, then train on all of TR0."""
    cfg = ctx.cfg
    schema = ctx.schema("TR0", ctx.tr0)
    fit_tr, val_tr = _validation_split(ctx, ctx.tr0, 0)
    fit_d = ctx.encode("TR0", "TR0.fit", fit_tr)
    val_d = ctx.encode("TR0", "TR0.val", val_tr)
    train_d = ctx.encode("TR0", "TR0", ctx.tr0)
    sw = Stopwatch()
    hp, trials = _tune(cfg, family, fit_d, val_d, cfg.seed, sw, "hyperopt")
    with sw.section("train"):
        if family == "batch":
            model = forest.train_batch(train_d, hp, cfg.seed, n_threads=cfg.threads)
        else:
            model = forest.train_incremental_initial(train_d, hp, cfg.seed,
                                                     n_threads=cfg.threads)
    return {"model": model, "hp": hp, "trials": trials, "schema": schema,
            "hyperopt_s": sw.seconds("hyperopt"), "train_s": sw.seconds("train"),
            "m0_build": sw.seconds("hyperopt") + sw.seconds("train"),
            "n_train": len(train_d)}


def _result(strategy, model, te_d, times, hp, schema, n_train, trials=(), **extra):
    rep = _evaluate(model, te_d)
    return StrategyResult(strategy, rep["auc"], rep["f1"], rep["accuracy"],
                          rep["per_prefix_auc"], times, hp.to_dict(), schema.fingerprint(),
                          schema.width, n_train, _trial_dicts(trials), extra)


def run_S0(ctx: Context, m0=None) -> StrategyResult:
    m0 = m0 or build_m0(ctx, "batch")
    te_d = ctx.encode("TR0", "TE", ctx.te)
    times = TimeBreakdown(m0_build=m0["m0_build"])
    return _result("S0", m0["model"], te_d, times, m0["hp"], m0["schema"], m0["n_train"],
                   m0["trials"], m0_hyperopt_s=m0["hyperopt_s"], m0_train_s=m0["train_s"])


def run_S1(ctx: Context, m0) -> StrategyResult:
    cfg = ctx.cfg
    train = ctx.tr0 + ctx.tr1
    schema = ctx.schema("TR", train)
    train_d = ctx.encode("TR", "TR", train)
    sw = Stopwatch()
    with sw.section("retrain"):
        model = forest.train_batch(train_d, m0["hp"], cfg.seed, n_threads=cfg.threads)
    times = TimeBreakdown(m0_build=m0["m0_build"], retrain=sw.seconds("retrain"))
    return _result("S1", model, ctx.encode("TR", "TE", ctx.te), times, m0["hp"], schema,
                   len(train_d))


def run_S2(ctx: Context, m0) -> StrategyResult:
    cfg = ctx.cfg
    train = ctx.tr0 + ctx.tr1
    schema = ctx.schema("TR", train)
    fit_tr, val_tr = _validation_split(ctx, train, 1)
    fit_d = ctx.encode("TR", "TR.fit", fit_tr)
    val_d = ctx.encode("TR", "TR.val", val_tr)
    train_d = ctx.encode("TR", "TR", train)
    sw = Stopwatch()
    hp, trials = _tune(cfg, "batch", fit_d, val_d, cfg.seed, sw, "hyperopt")
    with sw.section("retrain"):
        model = forest.train_batch(train_d, hp, cfg.seed, n_threads=cfg.threads)
    times = TimeBreakdown(m0_build=m0["m0_build"], hyperopt=sw.seconds("hyperopt"),
                          retrain=sw.seconds("retrain"))
    return _result("S2", model, ctx.encode("TR", "TE", ctx.te), times, hp, schema,
                   len(train_d), trials)


def run_S3(ctx: Context, m0_inc=None) -> StrategyResult:
    cfg = ctx.cfg
    m0_inc = m0_inc or build_m0(ctx, "incremental")
    tr1_d = ctx.encode("TR0", "TR1", ctx.tr1)
    te_d = ctx.encode("TR0", "TE", ctx.te)
    base_eval = _evaluate(m0_inc["model"], te_d)
    sw = Stopwatch()
    with sw.section("update"):
        model = forest.update(m0_inc["model"], tr1_d, n_threads=cfg.threads)
    times = TimeBreakdown(m0_build=m0_inc["m0_build"], incremental_update=sw.seconds("update"))
    if model.hp != m0_inc["hp"]:
        raise HarnessError("incremental update changed the hyperparameters")
    return _result("S3", model, te_d, times, m0_inc["hp"], m0_inc["schema"],
                   m0_inc["n_train"] + len(tr1_d), m0_inc["trials"],
                   m0_inc_auc=base_eval["auc"], m0_inc_hyperopt_s=m0_inc["hyperopt_s"],
                   m0_inc_train_s=m0_inc["train_s"])


# --- orchestration ---------------------------------------------------------

def prepare(cfg: ExperimentConfig, log=None) -> Context:
    log = log if log is not None else cfg.load_log()
    tr0, tr1, te = split(log, cfg.split)
    labeler = make_labeler(cfg.labeler)
    if isinstance(labeler, FastCaseLabeler) and labeler.threshold is None:
        labeler.freeze(tr0 + tr1)
    labels = label_log(log, labeler)
    return Context(cfg, tr0, tr1, te, labels, labeler.describe())


def _write_reports(out_dir: Path, report: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True,
                                                    default=str))
    with open(out_dir / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strategy", "auc", "f1", "accuracy", "m0_build_s", "retrain_s",
                    "hyperopt_s", "update_s", "total_s"])
        for s in STRATEGIES:
            r = report["strategies"][s]
            t = r["times"]
            w.writerow([s, r["auc"], r["f1"], r["accuracy"], t["m0_build"], t["retrain"],
                        t["hyperopt"], t["incremental_update"], r["total_seconds"]])
    with open(out_dir / "gains.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "labeling", "setting", "M0", "M1", "M2", "M3"])
        g = report["gains"]
        w.writerow([report["dataset"], report["labeling"].get("type", ""),
                    report["config"]["split"]["name"],
                    *(f"{g[f'M{i}']:.6f}" for i in range(4))])


def run_all(cfg: ExperimentConfig, out_dir=None, log=None) -> dict:
    """Run S0-S3 and return the report dict; optionally write report files.

    If a stage fails, whatever finished is written to ``report.partial.json``
    in ``out_dir`` before the error propagates.
    """
    out = Path(out_dir) if out_dir is not None else None
    report = {"config": cfg.to_dict(), "dataset": cfg.dataset_name or
              (Path(cfg.log_path).stem if cfg.log_path else "generated"),
              "backend": forest.BACKEND, "python": platform.python_version(),
              "threads": cfg.threads or forest.batch.default_threads(),
              "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "strategies": {}}
    stage = "prepare"
    try:
        ctx = prepare(cfg, log)
        report["labeling"] = ctx.labeler_info
        report["sizes"] = {"TR0": len(ctx.tr0), "TR1": len(ctx.tr1), "TE": len(ctx.te)}
        te_labels = [ctx.labels[t.case_id] for t in ctx.te]
        report["te_positive_rate"] = float(np.mean(te_labels))
        stage = "S0"
        m0 = build_m0(ctx, "batch")
        results = {"S0": run_S0(ctx, m0)}
        report["strategies"]["S0"] = results["S0"].to_dict()
        for s, fn in (("S1", lambda: run_S1(ctx, m0)), ("S2", lambda: run_S2(ctx, m0)),
                      ("S3", lambda: run_S3(ctx))):
            stage = s
            logger.info("running %s", s)
            results[s] = fn()
            report["strategies"][s] = results[s].to_dict()
        if results["S1"].hyperparameters != results["S0"].hyperparameters:
            raise HarnessError("S1 must reuse M0's hyperparameters verbatim")
        report["gains"] = gains({f"M{i}": results[f"S{i}"].auc for i in range(4)})
        report["auc_m0_batch"] = results["S0"].auc
        report["auc_m0_incremental"] = results["S3"].extra["m0_inc_auc"]
        report["schema_fingerprints"] = {s: r.schema_fingerprint for s, r in results.items()}
    except Exception as exc:
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            report["failed_stage"] = stage
            report["error"] = f"{type(exc).__name__}: {exc}"
            (out / "report.partial.json").write_text(
                json.dumps(report, indent=2, sort_keys=True, default=str))
        raise
    if out is not None:
        _write_reports(out, report)
        partial = out / "report.partial.json"
        if partial.exists():
            os.remove(partial)
    return report
