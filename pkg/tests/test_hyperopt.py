import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ppmupdate.hyperopt import (Param, SearchSpace, SearchSpaceError, TPEConfig, Trial,
                                default_batch_space, default_incremental_space, optimize,
                                suggest, write_trials_csv)

X01 = SearchSpace((Param("x", "real", 0.0, 1.0),))


def test_space_validation():
    with pytest.raises(SearchSpaceError):
        Param("a", "real", 1.0, 1.0)
    with pytest.raises(SearchSpaceError):
        Param("a", "real", 0.0, 1.0, "log")
    with pytest.raises(SearchSpaceError):
        Param("a", "float", 0.0, 1.0)
    with pytest.raises(SearchSpaceError):
        SearchSpace((Param("a", "int", 1, 2), Param("a", "int", 1, 2)))
    with pytest.raises(SearchSpaceError):
        Trial({}, 1.5, 0.0)


def test_empty_history_within_bounds():
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert 0.0 <= suggest([], X01, rng)["x"] <= 1.0


def test_int_suggestions_after_startup():
    space = SearchSpace((Param("k", "int", 1, 10),))
    _, trials = optimize(lambda p: p["k"] / 10, space, 60, 3)
    assert all(isinstance(t.params["k"], int) and 1 <= t.params["k"] <= 10 for t in trials)


def test_monotone_objective_concentrates_in_top_region():
    rng = np.random.default_rng(1)
    history = [Trial({"x": float(v)}, float(v), 0.0) for v in rng.random(30)]
    cut = np.quantile([t.objective for t in history], 0.75)
    hits = sum(suggest(history, X01, rng)["x"] >= cut for _ in range(200))
    assert hits / 200 >= 0.8


def test_constant_objective():
    best, trials = optimize(lambda p: 0.7, X01, 5, 0)
    assert len(trials) == 5 and max(t.objective for t in trials) == 0.7


@pytest.mark.parametrize("seed", range(5))
def test_planted_optimum(seed):
    best, _ = optimize(lambda p: 1 - abs(p["x"] - 0.3), X01, 100, seed)
    assert abs(best["x"] - 0.3) <= 0.05


def test_determinism():
    f = lambda p: 1 - abs(p["x"] - 0.6)  # noqa: E731
    a = optimize(f, X01, 30, 4)[1]
    b = optimize(f, X01, 30, 4)[1]
    assert [t.params for t in a] == [t.params for t in b]


def test_prefix_property():
    f = lambda p: math.sin(5 * p["x"]) ** 2  # noqa: E731
    short = optimize(f, X01, 25, 2)[1]
    long = optimize(f, X01, 40, 2)[1]
    assert [t.params for t in short] == [t.params for t in long[:25]]
    assert max(t.objective for t in long) >= max(t.objective for t in short)


def test_failed_trials_recorded():
    def f(p):
        if p["x"] < 0.5:
            raise RuntimeError("boom")
        return 0.9
    best, trials = optimize(f, X01, 30, 0)
    failed = [t for t in trials if t.failed]
    assert failed and all(t.objective == 0.0 and "boom" in t.error for t in failed)
    assert best["x"] >= 0.5
    assert len(trials) == 30


def test_startup_only_is_uniform():
    cfg = TPEConfig(n_startup=1000)
    _, trials = optimize(lambda p: p["x"], X01, 400, 7, cfg)
    xs = np.array([t.params["x"] for t in trials])
    hist, _ = np.histogram(xs, bins=4, range=(0, 1))
    assert hist.min() >= 70  # 100 expected per bin


def test_log_scale_respects_bounds():
    space = SearchSpace((Param("d", "real", 1e-7, 1e-2, "log"), Param("n", "int", 5, 100, "log")))
    _, trials = optimize(lambda p: -math.log10(p["d"]) / 7, space, 40, 1)
    for t in trials:
        assert 1e-7 <= t.params["d"] <= 1e-2 and 5 <= t.params["n"] <= 100
    small = np.mean([t.params["d"] < 1e-4 for t in trials[:20]])
    assert small > 0.4  # log-uniform startup puts ~60% of mass below 1e-4


@given(st.integers(0, 2**31))
def test_default_spaces_yield_valid_hyperparameters(seed):
    from ppmupdate.forest import BatchHyperparameters, IncHyperparameters
    rng = np.random.default_rng(seed)
    BatchHyperparameters(**suggest([], default_batch_space(), rng))
    IncHyperparameters(**suggest([], default_incremental_space(), rng))


def test_space_round_trip_and_csv(tmp_path):
    sp = default_incremental_space()
    assert SearchSpace.from_list(sp.to_list()) == sp
    _, trials = optimize(lambda p: 0.5, X01, 3, 0)
    write_trials_csv(tmp_path / "t.csv", trials, X01)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,x,objective,seconds,failed" and len(lines) == 4
