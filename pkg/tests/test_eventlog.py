from datetime import datetime, timezone

import pytest
from conftest import make_trace
from hypothesis import given
from hypothesis import strategies as st

from ppmupdate.eventlog import (Event, EventLog, EventLogError, Trace, datetime_to_ms,
                                parse_csv, parse_timestamp, parse_xes, read_labels_csv,
                                read_log, stats, write_labels_csv, write_xes)

XES_HEAD = '<?xml version="1.0" encoding="UTF-8"?><log xmlns="http://www.xes-standard.org/">'


def xes(body):
    return (XES_HEAD + body + "</log>").encode()


def ev(name, ts, extra=""):
    return (f'<event><string key="concept:name" value="{name}"/>'
            f'<date key="time:timestamp" value="{ts}"/>{extra}</event>')


def tr(cid, *events, extra=""):
    return f'<trace><string key="concept:name" value="{cid}"/>{extra}{"".join(events)}</trace>'


def test_parse_counts():
    log = parse_xes(xes(
        tr("1", ev("a", "2020-01-01T00:00:00Z"), ev("b", "2020-01-01T01:00:00Z"))
        + tr("2", ev("a", "2020-01-02T00:00:00Z"), ev("b", "2020-01-02T00:30:00Z"),
             ev("c", "2020-01-02T01:00:00Z"))))
    s = stats(log)
    assert (s.n_cases, s.n_events, s.n_activities) == (2, 5, 3)
    assert log.alphabet == ("a", "b", "c")


def test_out_of_order_events_are_sorted():
    log = parse_xes(xes(tr("1", ev("late", "2020-01-01T05:00:00+02:00"),
                           ev("early", "2020-01-01T02:00:00Z"))))
    assert log.traces[0].activities == ["early", "late"]


def test_equal_timestamps_keep_file_order():
    log = parse_xes(xes(tr("1", ev("x", "2020-01-01T00:00:00Z"), ev("y", "2020-01-01T00:00:00Z"),
                           ev("a", "2020-01-01T00:00:00Z"))))
    assert log.traces[0].activities == ["x", "y", "a"]


@pytest.mark.parametrize("body", [
    tr("1", '<event><date key="time:timestamp" value="2020-01-01T00:00:00Z"/></event>'),
    tr("1", '<event><string key="concept:name" value="a"/></event>'),
    tr("1", ev("a", "yesterday")),
    tr("1", ev("a", "2020-01-01T00:00:00Z", '<int key="n" value="1"/>'))
    + tr("2", ev("a", "2020-01-01T00:00:00Z", '<string key="n" value="x"/>')),
])
def test_parse_errors(body):
    with pytest.raises(EventLogError):
        parse_xes(xes(body))


def test_malformed_xml():
    with pytest.raises(EventLogError):
        parse_xes(b"<log><trace>")


def test_bad_optional_attribute_dropped():
    log = parse_xes(xes(tr("1", ev("a", "2020-01-01T00:00:00Z", '<int key="n" value="abc"/>'))))
    assert log.dropped_attributes == 1
    assert log.traces[0].events[0].payload == {}


def test_timestamp_normalisation():
    a = parse_timestamp("2020-01-01T02:00:00.123456+02:00")
    b = parse_timestamp("2020-01-01T00:00:00.123Z")
    assert datetime_to_ms(a) == datetime_to_ms(b)


def test_stats_examples():
    one = EventLog((make_trace("x", ["a"]),))
    s = stats(one)
    assert (s.n_cases, s.n_events, s.n_activities, s.mean_cycle_time) == (1, 1, 1, 0.0)
    two = EventLog((make_trace("p", ["a", "b"], step_ms=10_000),
                    make_trace("q", ["a", "b"], start_ms=5, step_ms=30_000)))
    assert stats(two).mean_cycle_time == 20.0
    assert stats(two) == stats(two)


def test_duplicate_case_ids_rejected():
    with pytest.raises(EventLogError):
        EventLog((make_trace("x", ["a"]), make_trace("x", ["b"])))


def test_all_kinds_round_trip():
    when = datetime(2021, 3, 4, 5, 6, 7, 890000, tzinfo=timezone.utc)
    t = Trace("c1", (Event("a", 0, {"s": "txt <&>", "i": 7, "f": 2.5, "b": True, "d": when}),
                     Event("b", 1500, {"s": "u", "i": -1, "f": 1e-9, "b": False, "d": when})),
              {"amount": 100, "kind": "gold"})
    log = EventLog((t,))
    back = parse_xes(write_xes(log))
    assert back == log
    assert back.attribute_schema == log.attribute_schema
    assert back.attribute_schema["event"] == {"b": "boolean", "d": "date", "f": "float",
                                              "i": "int", "s": "string"}


def test_empty_payload_round_trip():
    log = EventLog((make_trace("only", ["a"]),))
    assert parse_xes(write_xes(log)) == log


def test_generated_log_round_trip_and_byte_stable(default_log):
    blob = write_xes(default_log)
    back = parse_xes(blob)
    assert back == default_log
    assert len(back) == 2000
    assert write_xes(back) == blob


names = st.text(alphabet="abcXYZ _-&<>\"'", min_size=1, max_size=6)


@given(st.lists(st.lists(st.tuples(names, st.integers(0, 10**9)), min_size=1, max_size=5),
                min_size=1, max_size=5))
def test_xes_round_trip_property(cases):
    traces = [Trace(f"c{i}", tuple(Event(a, ts) for a, ts in evs)) for i, evs in enumerate(cases)]
    log = EventLog(tuple(traces))
    assert parse_xes(write_xes(log)) == log


MAPPING = {"case_id_col": "case", "activity_col": "act", "timestamp_col": "ts",
           "timestamp_format": "%Y-%m-%d %H:%M:%S",
           "columns": [{"name": "AMOUNT", "role": "case", "kind": "int"},
                       {"name": "cost", "role": "event", "kind": "float"}]}


def test_csv_basic():
    data = ("case,act,ts,AMOUNT,cost\n"
            "2,a,2020-01-02 00:00:00,200,1.5\n"
            "1,a,2020-01-01 00:00:00,100,2\n"
            "1,b,2020-01-01 01:00:00,100,3\n").encode()
    log = parse_csv(data, MAPPING)
    assert [t.case_id for t in log] == ["1", "2"]
    assert log.attribute_schema["case"] == {"AMOUNT": "int"}
    assert [t.case_attributes["AMOUNT"] for t in log] == [100, 200]
    assert log.traces[0].events[1].payload == {"cost": 3.0}


def test_csv_bad_timestamp_names_row():
    data = b"case,act,ts,AMOUNT,cost\n1,a,2020-01-01 00:00:00,1,1\n1,b,not-a-date,1,1\n"
    with pytest.raises(EventLogError, match="row 3"):
        parse_csv(data, MAPPING)


def test_csv_missing_column_and_empty():
    with pytest.raises(EventLogError):
        parse_csv(b"case,act\n1,a\n", MAPPING)
    with pytest.raises(EventLogError):
        parse_csv(b"", MAPPING)


def test_read_log_csv_needs_mapping(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("case,act,ts\n1,a,2020-01-01 00:00:00\n")
    with pytest.raises(EventLogError, match="mapping"):
        read_log(p)
    (tmp_path / "x.mapping.json").write_text(
        '{"case_id_col": "case", "activity_col": "act", "timestamp_col": "ts",'
        ' "timestamp_format": "%Y-%m-%d %H:%M:%S", "columns": []}')
    assert len(read_log(p)) == 1


def test_labels_csv_round_trip():
    labels = {"a": True, "b": False}
    assert read_labels_csv(write_labels_csv(labels)) == labels
