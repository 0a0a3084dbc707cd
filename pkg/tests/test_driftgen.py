import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppmupdate.driftgen import (Activity, DriftSpec, DriftSpecError, GeneratorConfig, Optional,
                                Parallel, Sequence, Xor, activities_of, apply_drift, base_model,
                                drift_index, generate, language, replay, simulate_case)
from ppmupdate.eventlog import stats
from ppmupdate.outcome import FastCaseLabeler, label_log


def test_base_model_shape():
    m = base_model()
    assert len(m.alphabet) == 18
    assert len(activities_of(m.root)) == 18


def test_drifted_alphabet():
    base = base_model()
    drifted = apply_drift(base, DriftSpec())
    assert set(drifted.alphabet) == set(base.alphabet) | {"Check fraud risk"}


def test_identity_spec_is_noop():
    m = base_model()
    assert apply_drift(m, DriftSpec.identity()) == m


def test_drift_edits():
    d = apply_drift(base_model(), DriftSpec())
    lang = language(d.root)
    assert all(t[1] == "Check fraud risk" for t in lang)
    assert any("Receive signed offer" not in t and "Send offer" in t for t in lang)
    assert any(t.index("Final approval") < t.index("Verify documents") for t in lang)
    assert d.durations["Notify rejection"][0] == 3 * base_model().durations["Notify rejection"][0]


@pytest.mark.parametrize("spec", [
    DriftSpec(insert=("New", "Missing step")),
    DriftSpec(resequentialize=("Submit application", "Register application")),
    DriftSpec(optionalize=("Nope", 0.5)),
    DriftSpec(slow_down=("Nope",)),
    DriftSpec(insert=("Send offer", "Submit application")),
])
def test_invalid_specs(spec):
    with pytest.raises(DriftSpecError):
        apply_drift(base_model(), spec)


def test_invalid_blocks():
    with pytest.raises(DriftSpecError):
        Xor(((0.5, Activity("a")), (0.4, Activity("b"))))
    with pytest.raises(DriftSpecError):
        Optional(Activity("a"), 0.0)
    with pytest.raises(DriftSpecError):
        DriftSpec(slow_factor=1.0)
    with pytest.raises(DriftSpecError):
        GeneratorConfig(drift_at_fraction=1.0)


def test_defaults_shape(default_log):
    s = stats(default_log)
    assert s.n_cases == 2000 and s.n_activities == 19


def test_drift_boundary(default_log):
    b = drift_index(GeneratorConfig())
    assert b == 1400
    traces = default_log.traces
    assert all("Check fraud risk" not in t.activities for t in traces[:b])
    assert "Check fraud risk" in traces[b].activities
    assert all(t.activities[0] == "Submit application" for t in traces[:b])


def test_replay_validator(default_log):
    base, drifted = GeneratorConfig().models()
    b = drift_index(GeneratorConfig())
    assert all(replay(base, t) for t in default_log.traces[:b])
    assert all(replay(drifted, t) for t in default_log.traces[b:])
    assert not replay(base, default_log.traces[b])
    assert not replay(base, ["Submit application"])


def test_fast_case_rate(default_log):
    labels = label_log(default_log, FastCaseLabeler().freeze(default_log))
    rate = np.mean(list(labels.values()))
    assert 0.3 <= rate <= 0.7


def test_slow_down_raises_mean_cycle_time():
    base, drifted = GeneratorConfig().models()
    rng = np.random.default_rng(0)

    def mean_ct(model):
        cts = []
        for _ in range(10_000):
            ev = simulate_case(model, 0, rng)
            cts.append(ev[-1][0] - ev[0][0])
        return np.mean(cts)
    assert mean_ct(drifted) > mean_ct(base)


def test_determinism_and_seed_sensitivity():
    a = generate(GeneratorConfig(n_cases=50, seed=3))
    b = generate(GeneratorConfig(n_cases=50, seed=3))
    c = generate(GeneratorConfig(n_cases=50, seed=4))
    assert a == b and a != c


def test_parallel_interleaving_language():
    m = Sequence((Activity("a"), Parallel((Activity("b"), Sequence((Activity("c"),
                                                                     Activity("d")))))))
    assert language(m) == {("a", "b", "c", "d"), ("a", "c", "b", "d"), ("a", "c", "d", "b")}


@settings(max_examples=10)
@given(st.integers(0, 2**31))
def test_simulated_cases_replay(seed):
    base, drifted = GeneratorConfig().models()
    rng = np.random.default_rng(seed)
    for m in (base, drifted):
        for _ in range(20):
            acts = [a for _, a in simulate_case(m, 0, rng)]
            assert replay(m, acts)


def test_config_round_trip():
    cfg = GeneratorConfig(n_cases=10, seed=1, durations={"Close case": (2.0, 0.1)})
    assert GeneratorConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()
    with pytest.raises(DriftSpecError):
        GeneratorConfig.from_dict({"bogus": 1})
