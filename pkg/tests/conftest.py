import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_trace(case_id, acts, start_ms=0, step_ms=1000, **case_attrs):
    from ppmupdate.eventlog import Event, Trace
    events = tuple(Event(a, start_ms + i * step_ms) for i, a in enumerate(acts))
    return Trace(case_id, events, dict(case_attrs))


@pytest.fixture(scope="session")
def default_log():
    from ppmupdate.driftgen import generate
    return generate()


@pytest.fixture
def small_log():
    from ppmupdate.eventlog import EventLog
    return EventLog(tuple(make_trace(f"c{i}", ["A", "B", "C"][: 1 + i % 3], start_ms=i * 10_000)
                          for i in range(12)))


ACCEPTANCE_LINES = []


def record_acceptance(criterion, ok, detail):
    """Print and remember one PASS/FAIL line (SKIP when ``ok`` is None)."""
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    line = f"{status} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
