import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import pair_auc

from ppmupdate.metrics import (MetricError, Stopwatch, TimeBreakdown, accuracy, auc,
                               confusion_at, f1_from_counts, f_measure, format_hms,
                               macro_f1_from_counts)


def test_auc_examples():
    assert auc([(0.8, True), (0.6, True), (0.7, False), (0.1, False)]) == 0.75
    assert auc([0.5, 0.5], [True, False]) == 0.5
    assert auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0


def test_auc_single_class():
    with pytest.raises(MetricError):
        auc([0.1, 0.2], [True, True])
    with pytest.raises(MetricError):
        auc([], [])


scored = st.lists(st.tuples(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0]) |
                            st.floats(0, 1), st.booleans()), min_size=2, max_size=80).filter(
    lambda xs: any(y for _, y in xs) and not all(y for _, y in xs))


@given(scored)
def test_auc_equals_pair_oracle(xs):
    s, y = zip(*xs)
    assert abs(auc(s, y) - pair_auc(s, y)) <= 1e-12


@given(scored)
def test_flip_labels_complements(xs):
    s, y = zip(*xs)
    assert auc(s, y) + auc(s, [not v for v in y]) == pytest.approx(1.0, abs=1e-12)


@given(scored)
def test_monotone_transform_invariance(xs):
    s, y = zip(*xs)
    # quantise so the transform stays strictly monotone in floating point
    s = np.round(np.array(s), 6)
    assert auc(np.exp(3 * s) - 7, y) == pytest.approx(auc(s, y), abs=1e-12)


def test_confusion_example():
    # TP=3, FP=1, FN=1, TN=5
    s = [0.9] * 3 + [0.8] + [0.1] + [0.2] * 5
    y = [1, 1, 1, 0, 1, 0, 0, 0, 0, 0]
    c = confusion_at(s, y)
    assert c == {"TP": 3, "TN": 5, "FP": 1, "FN": 1}
    assert accuracy(s, y) == pytest.approx(0.8)
    assert f1_from_counts(3, 1, 1) == 0.75
    assert f_measure(s, y) == pytest.approx((0.75 + 10 / 12) / 2)


def test_all_correct_and_threshold_inclusive():
    assert accuracy([0.9, 0.1], [1, 0]) == 1.0
    assert f_measure([0.9, 0.1], [1, 0]) == 1.0
    assert accuracy([0.5] * 4, [1, 1, 0, 0]) == 0.5


def test_f1_empty_class_convention():
    assert macro_f1_from_counts({"TP": 4, "TN": 0, "FP": 0, "FN": 0}) == 1.0


def test_stopwatch_sleep():
    sw = Stopwatch()
    with sw.section("s"):
        time.sleep(0.1)
    assert 0.1 <= sw.seconds("s") <= 0.15


def test_stopwatch_nested_sections():
    sw = Stopwatch()
    with sw.section("outer"):
        for _ in range(3):
            with sw.section("inner"):
                time.sleep(0.01)
    assert sw.seconds("inner") <= sw.seconds("outer") + 0.001


def test_time_breakdown_identities():
    t = TimeBreakdown(m0_build=10.5, retrain=2.25, hyperopt=30.0, incremental_update=0.5)
    assert t.total("S0") == 10.5
    assert t.total("S1") - t.total("S0") == 2.25
    assert t.total("S2") == 10.5 + 30.0 + 2.25
    assert t.total("S3") == 10.5 + 0.5
    with pytest.raises(MetricError):
        TimeBreakdown(m0_build=-1)
    with pytest.raises(MetricError):
        t.total("S9")


def test_format_hms():
    assert format_hms(0) == "00:00:00.000"
    assert format_hms(3723.5) == "01:02:03.500"
