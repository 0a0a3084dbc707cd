"""Event-log model, XES/CSV readers, XES writer and log statistics.

Timestamps are held as integer milliseconds since the Unix epoch (UTC).
Payload values keep their Python type, which determines the attribute kind:

    str -> "string", int -> "int", float -> "float",
    bool -> "boolean", datetime -> "date"
"""
from __future__ import annotations

import csv
import io
import logging
import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from xml.sax.saxutils import quoteattr

logger = logging.getLogger(__name__)

ACTIVITY_KEY = "concept:name"
CASE_KEY = "concept:name"
TIMESTAMP_KEY = "time:timestamp"

KINDS = ("string", "int", "float", "boolean", "date")
_KIND_ALIASES = {
    "str": "string", "string": "string", "categorical": "string",
    "int": "int", "integer": "int",
    "float": "float", "real": "float", "double": "float",
    "bool": "boolean", "boolean": "boolean",
    "date": "date", "timestamp": "date", "datetime": "date",
}
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class EventLogError(ValueError):
    """Raised for malformed or inconsistent event-log input."""


def kind_of(value) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, datetime):
        return "date"
    if isinstance(value, str):
        return "string"
    raise EventLogError(f"unsupported attribute value {value!r}")


def normalize_kind(kind: str) -> str:
    try:
        return _KIND_ALIASES[kind.lower()]
    except KeyError:
        raise EventLogError(f"unknown attribute kind {kind!r}") from None


# --- timestamps ------------------------------------------------------------

_FRACTION = re.compile(r"\.(\d+)")


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp as found in XES files into an aware UTC datetime."""
    s = text.strip()
    if not s:
        raise ValueError("empty timestamp")
    if s[-1] in "zZ":
        s = s[:-1] + "+00:00"
    # fromisoformat on 3.10 wants exactly 3 or 6 fractional digits
    m = _FRACTION.search(s)
    if m:
        digits = (m.group(1) + "000000")[:6]
        s = s[: m.start()] + "." + digits + s[m.end():]
    # "+0200" -> "+02:00"
    s = re.sub(r"([+-]\d\d)(\d\d)$", r"\1:\2", s)
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return to_utc_ms_datetime(dt)


def to_utc_ms_datetime(dt: datetime) -> datetime:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return dt.replace(microsecond=(dt.microsecond // 1000) * 1000)


def datetime_to_ms(dt: datetime) -> int:
    dt = to_utc_ms_datetime(dt)
    delta = dt - _EPOCH
    return (delta.days * 86_400 + delta.seconds) * 1000 + delta.microseconds // 1000


def ms_to_datetime(ms: int) -> datetime:
    secs, rem = divmod(int(ms), 1000)
    return datetime.fromtimestamp(secs, tz=timezone.utc).replace(microsecond=rem * 1000)


def format_timestamp(dt_or_ms) -> str:
    if not isinstance(dt_or_ms, datetime):
        dt_or_ms = ms_to_datetime(dt_or_ms)
    dt = to_utc_ms_datetime(dt_or_ms)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}+00:00"


# --- model -----------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    activity: str
    timestamp: int
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.activity:
            raise EventLogError("event activity must be non-empty")


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple
    case_attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.events:
            raise EventLogError(f"trace {self.case_id!r} has no events")
        evs = tuple(self.events)
        # sorted() is stable, so equal timestamps keep their input order
        if any(a.timestamp > b.timestamp for a, b in zip(evs, evs[1:])):
            evs = tuple(sorted(evs, key=lambda e: e.timestamp))
        object.__setattr__(self, "events", evs)

    @property
    def start_time(self) -> int:
        return self.events[0].timestamp

    @property
    def end_time(self) -> int:
        return self.events[-1].timestamp

    @property
    def cycle_time(self) -> float:
        """Seconds between the first and the last event."""
        return (self.end_time - self.start_time) / 1000.0

    @property
    def activities(self) -> list:
        return [e.activity for e in self.events]

    def __len__(self):
        return len(self.events)


@dataclass(frozen=True)
class EventLog:
    traces: tuple
    alphabet: tuple = ()
    attribute_schema: dict = field(default_factory=dict)
    dropped_attributes: int = field(default=0, compare=False)

    def __post_init__(self):
        traces = tuple(sorted(self.traces, key=lambda t: t.start_time))
        ids = set()
        for t in traces:
            if t.case_id in ids:
                raise EventLogError(f"duplicate case id {t.case_id!r}")
            ids.add(t.case_id)
        object.__setattr__(self, "traces", traces)
        object.__setattr__(
            self, "alphabet",
            tuple(sorted({e.activity for t in traces for e in t.events})),
        )
        object.__setattr__(self, "attribute_schema", _infer_schema(traces))

    def __len__(self):
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    def subset(self, traces) -> "EventLog":
        return EventLog(tuple(traces))


def _infer_schema(traces) -> dict:
    case, event = {}, {}

    def note(target, scope, name, value):
        k = kind_of(value)
        prev = target.setdefault(name, k)
        if prev != k:
            raise EventLogError(
                f"{scope} attribute {name!r} has mixed kinds: {prev} and {k}")

    for t in traces:
        for name, value in t.case_attributes.items():
            note(case, "case", name, value)
        for e in t.events:
            for name, value in e.payload.items():
                note(event, "event", name, value)
    return {"case": dict(sorted(case.items())), "event": dict(sorted(event.items()))}


@dataclass(frozen=True)
class LogStats:
    n_cases: int
    n_events: int
    n_activities: int
    mean_cycle_time: float

    def __str__(self):
        return (f"cases={self.n_cases} events={self.n_events} "
                f"activities={self.n_activities} "
                f"mean_cycle_time={self.mean_cycle_time:.1f}s")


def stats(log: EventLog) -> LogStats:
    n = len(log.traces)
    mean_ct = math.fsum(t.cycle_time for t in log.traces) / n if n else 0.0
    return LogStats(
        n_cases=n,
        n_events=sum(len(t.events) for t in log.traces),
        n_activities=len(log.alphabet),
        mean_cycle_time=mean_ct,
    )


# --- XES -------------------------------------------------------------------

_XES_TYPES = {"string", "date", "int", "float", "boolean", "id"}


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _convert(tag: str, raw: str):
    if tag in ("string", "id"):
        return raw
    if tag == "int":
        return int(raw)
    if tag == "float":
        return float(raw)
    if tag == "boolean":
        low = raw.strip().lower()
        if low not in ("true", "false"):
            raise ValueError(raw)
        return low == "true"
    if tag == "date":
        return parse_timestamp(raw)
    raise ValueError(tag)


def parse_xes(data) -> EventLog:
    """Parse the XES core subset (log/trace/event with typed attributes).

    Unparseable optional attributes are dropped and counted in
    ``EventLog.dropped_attributes``; traces without events are skipped.
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise EventLogError(f"malformed XML: {exc}") from None
    if _local(root.tag) != "log":
        raise EventLogError(f"root element is <{_local(root.tag)}>, expected <log>")

    dropped = 0
    traces = []
    for t_idx, t_el in enumerate(c for c in root if _local(c.tag) == "trace"):
        case_id = None
        case_attrs = {}
        events = []
        for child in t_el:
            tag = _local(child.tag)
            if tag == "event":
                ev, d = _parse_event(child, t_idx)
                dropped += d
                events.append(ev)
            elif tag in _XES_TYPES:
                key = child.get("key")
                raw = child.get("value")
                if key is None or raw is None:
                    dropped += 1
                    continue
                if key == CASE_KEY:
                    case_id = raw
                    continue
                try:
                    case_attrs[key] = _convert(tag, raw)
                except ValueError:
                    dropped += 1
            else:
                dropped += 1  # lists/containers are outside the subset
        if case_id is None:
            raise EventLogError(f"trace #{t_idx} has no {CASE_KEY!r}")
        if not events:
            logger.warning("skipping trace %r without events", case_id)
            continue
        traces.append(Trace(case_id, tuple(events), case_attrs))
    if dropped:
        logger.warning("dropped %d unparseable or unsupported attributes", dropped)
    return EventLog(tuple(traces), dropped_attributes=dropped)


def _parse_event(el, t_idx):
    activity = None
    ts = None
    payload = {}
    dropped = 0
    for child in el:
        tag = _local(child.tag)
        key = child.get("key")
        raw = child.get("value")
        if tag not in _XES_TYPES or key is None or raw is None:
            dropped += 1
            continue
        if key == ACTIVITY_KEY:
            activity = raw
        elif key == TIMESTAMP_KEY:
            try:
                ts = datetime_to_ms(parse_timestamp(raw))
            except ValueError:
                raise EventLogError(
                    f"trace #{t_idx}: unparseable timestamp {raw!r}") from None
        else:
            try:
                payload[key] = _convert(tag, raw)
            except ValueError:
                dropped += 1
    if not activity:
        raise EventLogError(f"trace #{t_idx}: event without {ACTIVITY_KEY!r}")
    if ts is None:
        raise EventLogError(f"trace #{t_idx}: event without {TIMESTAMP_KEY!r}")
    return Event(activity, ts, payload), dropped


def _xes_attr(key: str, value) -> str:
    k = kind_of(value)
    if k == "boolean":
        text = "true" if value else "false"
    elif k == "float":
        text = repr(float(value))
    elif k == "date":
        text = format_timestamp(value)
    else:
        text = str(value)
    return f"<{k} key={quoteattr(key)} value={quoteattr(text)}/>"


def write_xes(log: EventLog) -> bytes:
    out = io.StringIO()
    w = out.write
    w('<?xml version="1.0" encoding="UTF-8"?>\n')
    w('<log xes.version="1.0" xes.features="nested-attributes" '
      'xmlns="http://www.xes-standard.org/">\n')
    w('  <extension name="Concept" prefix="concept" uri="http://www.xes-standard.org/concept.xesext"/>\n')
    w('  <extension name="Time" prefix="time" uri="http://www.xes-standard.org/time.xesext"/>\n')
    for t in log.traces:
        w("  <trace>\n")
        w(f"    <string key={quoteattr(CASE_KEY)} value={quoteattr(t.case_id)}/>\n")
        for key in sorted(t.case_attributes):
            w(f"    {_xes_attr(key, t.case_attributes[key])}\n")
        for e in t.events:
            w("    <event>\n")
            w(f"      <string key={quoteattr(ACTIVITY_KEY)} value={quoteattr(e.activity)}/>\n")
            w(f"      <date key={quoteattr(TIMESTAMP_KEY)} value=\"{format_timestamp(e.timestamp)}\"/>\n")
            for key in sorted(e.payload):
                w(f"      {_xes_attr(key, e.payload[key])}\n")
            w("    </event>\n")
        w("  </trace>\n")
    w("</log>\n")
    return out.getvalue().encode("utf-8")


# --- CSV -------------------------------------------------------------------

def _parse_cell(raw: str, kind: str, ts_format: str):
    if kind == "string":
        return raw
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "boolean":
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(raw)
    if kind == "date":
        return _parse_csv_time(raw, ts_format)
    raise ValueError(kind)


def _parse_csv_time(raw: str, ts_format: str | None) -> datetime:
    if ts_format:
        return to_utc_ms_datetime(datetime.strptime(raw.strip(), ts_format))
    return parse_timestamp(raw)


def parse_csv(data, mapping: dict) -> EventLog:
    """Build an EventLog from a flat CSV with one row per event.

    ``mapping`` = {case_id_col, activity_col, timestamp_col, timestamp_format,
    columns: [{name, role: "case"|"event", kind}]}. Empty cells are treated
    as missing values.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8-sig")
    if not data.strip():
        raise EventLogError("empty CSV input")
    reader = csv.DictReader(io.StringIO(data))
    header = reader.fieldnames or []
    try:
        case_col = mapping["case_id_col"]
        act_col = mapping["activity_col"]
        ts_col = mapping["timestamp_col"]
    except KeyError as exc:
        raise EventLogError(f"mapping lacks {exc.args[0]!r}") from None
    ts_format = mapping.get("timestamp_format")
    columns = [
        (c["name"], c.get("role", "event"), normalize_kind(c.get("kind", "string")))
        for c in mapping.get("columns", [])
    ]
    for name in [case_col, act_col, ts_col] + [c[0] for c in columns]:
        if name not in header:
            raise EventLogError(f"mapped column {name!r} not in CSV header {header}")
    for name, role, _ in columns:
        if role not in ("case", "event"):
            raise EventLogError(f"column {name!r}: role must be 'case' or 'event'")

    groups: dict[str, list] = {}
    case_attrs: dict[str, dict] = {}
    for row_no, row in enumerate(reader, start=2):
        cid = row[case_col]
        try:
            ts = datetime_to_ms(_parse_csv_time(row[ts_col], ts_format))
        except ValueError:
            raise EventLogError(
                f"row {row_no}: unparseable timestamp {row[ts_col]!r}") from None
        activity = row[act_col]
        if not activity:
            raise EventLogError(f"row {row_no}: empty activity")
        payload = {}
        attrs = case_attrs.setdefault(cid, {})
        for name, role, kind in columns:
            raw = row[name]
            if raw is None or raw == "":
                continue
            try:
                value = _parse_cell(raw, kind, ts_format)
            except ValueError:
                raise EventLogError(
                    f"row {row_no}: column {name!r} value {raw!r} is not {kind}") from None
            if role == "case":
                attrs.setdefault(name, value)
            else:
                payload[name] = value
        groups.setdefault(cid, []).append(Event(activity, ts, payload))
    if not groups:
        raise EventLogError("CSV has a header but no rows")
    traces = [Trace(cid, tuple(evs), case_attrs[cid]) for cid, evs in groups.items()]
    return EventLog(tuple(traces))


def read_log(path) -> EventLog:
    """Read a log file, choosing the parser from the extension (.xes or .csv)."""
    import json
    from pathlib import Path

    path = Path(path)
    data = path.read_bytes()
    if path.suffix.lower() == ".csv":
        mapping_path = path.with_suffix(".mapping.json")
        if not mapping_path.exists():
            raise EventLogError(
                f"CSV log needs a column mapping next to it: {mapping_path}")
        return parse_csv(data, json.loads(mapping_path.read_text()))
    return parse_xes(data)


def write_labels_csv(labels: dict) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["case_id", "label"])
    for cid, lab in labels.items():
        w.writerow([cid, int(bool(lab))])
    return out.getvalue()


def read_labels_csv(text: str) -> dict:
    reader = csv.DictReader(io.StringIO(text))
    out = {}
    for row in reader:
        out[row["case_id"]] = row["label"].strip().lower() in ("1", "true")
    return out


__all__ = [
    "Event", "Trace", "EventLog", "EventLogError", "LogStats",
    "parse_xes", "write_xes", "parse_csv", "stats", "read_log",
]
