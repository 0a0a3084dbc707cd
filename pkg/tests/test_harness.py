import csv
import json

import numpy as np
import pytest
from conftest import make_trace

from ppmupdate import forest, harness
from ppmupdate.eventlog import EventLog
from ppmupdate.harness import (Context, ExperimentConfig, HarnessError, SplitSetting, build_m0,
                               gains, prepare, run_all, run_S1, run_S3, sample_validation,
                               split)
from ppmupdate.metrics import auc


def plain_log(n):
    return EventLog(tuple(make_trace(f"c{i:04d}", ["a", "b"], start_ms=(n - i) * 1000)
                          for i in range(n)))


@pytest.mark.parametrize("setting,sizes", [("A", (200, 1400, 400)), ("B", (800, 800, 400))])
def test_split_sizes(setting, sizes):
    tr0, tr1, te = split(plain_log(2000), setting)
    assert (len(tr0), len(tr1), len(te)) == sizes


def test_split_is_temporal():
    tr0, tr1, te = split(plain_log(37), SplitSetting(0.3, 0.3, 0.4))
    assert max(t.start_time for t in tr0) <= min(t.start_time for t in tr1)
    assert max(t.start_time for t in tr1) <= min(t.start_time for t in te)
    assert len(tr0) + len(tr1) + len(te) == 37
    assert (len(tr0), len(tr1)) == (11, 11)


def test_split_errors():
    with pytest.raises(HarnessError):
        split(plain_log(9), "A")
    with pytest.raises(HarnessError):
        SplitSetting(0.5, 0.5, 0.1)
    with pytest.raises(HarnessError):
        SplitSetting(0.0, 0.8, 0.2)
    with pytest.raises(HarnessError):
        SplitSetting.parse("C")


@pytest.mark.parametrize("n,k", [(200, 40), (1600, 320), (7, 1)])
def test_validation_sizes(n, k):
    traces = list(plain_log(n))
    fit, val = sample_validation(traces, 0.2, np.random.default_rng(0))
    assert len(val) == k
    assert {t.case_id for t in fit} | {t.case_id for t in val} == {t.case_id for t in traces}
    assert not {t.case_id for t in fit} & {t.case_id for t in val}


def test_validation_deterministic_and_small():
    traces = list(plain_log(50))
    a = sample_validation(traces, 0.2, np.random.default_rng(3))
    b = sample_validation(traces, 0.2, np.random.default_rng(3))
    assert [t.case_id for t in a[1]] == [t.case_id for t in b[1]]
    with pytest.raises(HarnessError):
        sample_validation(traces[:4], 0.2)


def test_gains_formula():
    g = gains([0.603, 0.964, 0.965, 0.964])
    assert g["M0"] == 0.0
    assert [round(g[f"M{i}"], 3) for i in (1, 2, 3)] == [0.599, 0.600, 0.599]
    with pytest.raises(HarnessError):
        gains([0.0, 0.5])


def small_cfg(**kw):
    base = dict(generator={"n_cases": 200, "seed": 5}, max_iterations=3, seed=1,
                batch_space=[{"name": "n_trees", "kind": "int", "bounds": [5, 20]},
                             {"name": "max_depth", "kind": "int", "bounds": [2, 8]},
                             {"name": "min_samples_leaf", "kind": "int", "bounds": [1, 5]},
                             {"name": "max_features_fraction", "kind": "real",
                              "bounds": [0.2, 1.0]}])
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("exp")
    return run_all(small_cfg(), out), out


def test_report_files(small_run):
    report, out = small_run
    rows = list(csv.DictReader(open(out / "report.csv")))
    assert [r["strategy"] for r in rows] == ["S0", "S1", "S2", "S3"]
    assert set(rows[0]) == {"strategy", "auc", "f1", "accuracy", "m0_build_s", "retrain_s",
                            "hyperopt_s", "update_s", "total_s"}
    j = json.loads((out / "report.json").read_text())
    assert j["config"]["seed"] == 1
    assert j["config"]["batch_space"][0]["name"] == "n_trees"
    assert set(j["schema_fingerprints"]) == {"S0", "S1", "S2", "S3"}
    g = list(csv.reader(open(out / "gains.csv")))
    assert g[0] == ["dataset", "labeling", "setting", "M0", "M1", "M2", "M3"]
    assert float(g[1][3]) == 0.0


def test_report_accounting(small_run):
    report, _ = small_run
    st = report["strategies"]
    m0 = st["S0"]["times"]["m0_build"]
    assert st["S0"]["total_seconds"] == m0
    assert st["S1"]["total_seconds"] == m0 + st["S1"]["times"]["retrain"]
    assert st["S2"]["total_seconds"] == (m0 + st["S2"]["times"]["hyperopt"]
                                         + st["S2"]["times"]["retrain"])
    t3 = st["S3"]["times"]
    assert st["S3"]["total_seconds"] == t3["m0_build"] + t3["incremental_update"]
    assert st["S1"]["hyperparameters"] == st["S0"]["hyperparameters"]
    for s in st.values():
        assert 0 <= s["auc"] <= 1 and 0 <= s["f1"] <= 1 and 0 <= s["accuracy"] <= 1
        assert s["per_prefix_auc"]
    assert report["gains"]["M0"] == 0.0
    assert len(st["S0"]["trials"]) == 3 and len(st["S2"]["trials"]) == 3


def test_run_all_deterministic(small_run):
    report, _ = small_run
    again = run_all(small_cfg())
    for s in ("S0", "S1", "S2", "S3"):
        assert again["strategies"][s]["auc"] == report["strategies"][s]["auc"]
        assert again["strategies"][s]["hyperparameters"] == \
            report["strategies"][s]["hyperparameters"]


def test_partial_report_on_failure(tmp_path, monkeypatch):
    def boom(ctx, m0):
        raise RuntimeError("injected failure")
    monkeypatch.setattr(harness, "run_S2", boom)
    with pytest.raises(RuntimeError):
        run_all(small_cfg(), tmp_path)
    partial = json.loads((tmp_path / "report.partial.json").read_text())
    assert partial["failed_stage"] == "S2"
    assert set(partial["strategies"]) == {"S0", "S1"}
    assert not (tmp_path / "report.csv").exists()


def _ctx_with_empty_tr1(cfg):
    ctx = prepare(cfg)
    return Context(cfg, ctx.tr0, [], ctx.te, ctx.labels, ctx.labeler_info)


def test_empty_tr1_retrain_equals_m0():
    cfg = small_cfg()
    ctx = _ctx_with_empty_tr1(cfg)
    m0 = build_m0(ctx, "batch")
    s1 = run_S1(ctx, m0)
    te = ctx.encode("TR0", "TE", ctx.te)
    model1 = forest.train_batch(ctx.encode("TR", "TR", ctx.tr0), m0["hp"], cfg.seed)
    assert np.array_equal(model1.predict_proba(te.X), m0["model"].predict_proba(te.X))
    assert s1.auc == auc(m0["model"].predict_proba(te.X), te.y)


def test_empty_tr1_update_is_identity():
    cfg = small_cfg()
    ctx = _ctx_with_empty_tr1(cfg)
    m0_inc = build_m0(ctx, "incremental")
    s3 = run_S3(ctx, m0_inc)
    assert s3.auc == s3.extra["m0_inc_auc"]
    assert s3.times.incremental_update >= 0


def test_test_traces_never_reach_training(monkeypatch):
    cfg = small_cfg()
    log = cfg.load_log()
    tr0, tr1, te = split(log, cfg.split)
    # give every test trace an activity nobody else has
    from ppmupdate.eventlog import Event, Trace
    marked = [Trace(t.case_id, t.events + (Event("ONLY_IN_TEST", t.end_time + 1),))
              for t in te]
    log2 = EventLog(tuple(tr0 + tr1 + marked))
    seen = []
    real_fit = harness.fit_schema

    def spy(traces, k):
        traces = list(traces)
        seen.append({t.case_id for t in traces})
        return real_fit(traces, k)
    monkeypatch.setattr(harness, "fit_schema", spy)
    ctx = prepare(cfg, log2)
    m0 = build_m0(ctx, "batch")
    harness.run_S2(ctx, m0)
    te_ids = {t.case_id for t in marked}
    assert seen and all(not (s & te_ids) for s in seen)
    for schema in ctx._schemas.values():
        assert "ONLY_IN_TEST" not in schema.activity_vocabulary
    ref = tr0 + tr1
    expected = sum(t.cycle_time for t in ref) / len(ref)
    assert ctx.labeler_info["threshold_seconds"] == pytest.approx(expected)


def test_stationary_separable_log_m0_auc():
    rng = np.random.default_rng(0)
    traces = []
    for i in range(120):
        first = "good" if rng.random() < 0.5 else "bad"
        traces.append(make_trace(f"c{i:03d}", ["start", first, "mid", "end"], start_ms=i * 1000))
    cfg = ExperimentConfig(labeler={"type": "ltl", "formula": "F(good)"}, max_iterations=3,
                           max_prefix_len=4, seed=2)
    ctx = prepare(cfg, EventLog(tuple(traces)))
    res = harness.run_S0(ctx)
    # the first prefix cannot know the outcome; every longer prefix can
    assert res.per_prefix_auc[1] == 0.5
    assert all(res.per_prefix_auc[k] >= 0.9 for k in (2, 3, 4))
    assert res.auc >= 0.9


def test_config_from_dict():
    cfg = ExperimentConfig.from_dict({"split": {"tr0": 0.2, "tr1": 0.6, "te": 0.2},
                                      "out_dir": "ignored"})
    assert cfg.split.tr0 == 0.2
    with pytest.raises(HarnessError):
        ExperimentConfig.from_dict({"nope": 1})
    with pytest.raises(HarnessError):
        ExperimentConfig(validation_fraction=1.0)
