"""Prefix extraction and complex index encoding.

Row layout, for a schema with prefix cap K::

    [case features] [index 1: activity one-hot, event attributes] ... [index K: ...]

Categorical values are one-hot over the fitted vocabulary plus reserved
columns (OTHER for unseen values; PAD additionally in per-index blocks).
Numeric values pass through; booleans become 0/1 and date values become
seconds since the start of the trace.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .eventlog import EventLogError, datetime_to_ms

PAD = "<PAD>"
OTHER = "<OTHER>"


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    vocabulary: tuple | None = None  # categorical only, reserved tokens excluded

    @property
    def categorical(self) -> bool:
        return self.kind == "string"


@dataclass(frozen=True)
class EncodingSchema:
    max_prefix_len: int
    case_features: tuple
    event_features: tuple
    activity_vocabulary: tuple  # observed labels, then PAD, then OTHER

    def __post_init__(self):
        acts = [a for a in self.activity_vocabulary if a not in (PAD, OTHER)]
        object.__setattr__(self, "activity_vocabulary", tuple(acts) + (PAD, OTHER))
        object.__setattr__(self, "_act_index", {a: i for i, a in enumerate(acts)})
        object.__setattr__(self, "_vocab_index", {
            f.name: {v: i for i, v in enumerate(f.vocabulary)}
            for f in (*self.case_features, *self.event_features) if f.categorical
        })

    # widths
    @property
    def activity_width(self) -> int:
        return len(self.activity_vocabulary)

    @staticmethod
    def _case_width(f: Feature) -> int:
        return len(f.vocabulary) + 1 if f.categorical else 1

    @staticmethod
    def _event_width(f: Feature) -> int:
        return len(f.vocabulary) + 2 if f.categorical else 1

    @property
    def case_width(self) -> int:
        return sum(self._case_width(f) for f in self.case_features)

    @property
    def index_width(self) -> int:
        return self.activity_width + sum(self._event_width(f) for f in self.event_features)

    @property
    def width(self) -> int:
        return self.case_width + self.max_prefix_len * self.index_width

    def column_names(self) -> list:
        names = []
        for f in self.case_features:
            if f.categorical:
                names += [f"case:{f.name}={v}" for v in f.vocabulary]
                names.append(f"case:{f.name}={OTHER}")
            else:
                names.append(f"case:{f.name}")
        for i in range(1, self.max_prefix_len + 1):
            names += [f"e{i}:activity={a}" for a in self.activity_vocabulary]
            for f in self.event_features:
                if f.categorical:
                    names += [f"e{i}:{f.name}={v}" for v in (*f.vocabulary, PAD, OTHER)]
                else:
                    names.append(f"e{i}:{f.name}")
        return names

    def to_dict(self) -> dict:
        def feat(f):
            return {"name": f.name, "kind": f.kind,
                    "vocabulary": list(f.vocabulary) if f.vocabulary is not None else None}
        return {
            "max_prefix_len": self.max_prefix_len,
            "case_features": [feat(f) for f in self.case_features],
            "event_features": [feat(f) for f in self.event_features],
            "activity_vocabulary": list(self.activity_vocabulary),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncodingSchema":
        def feat(x):
            vocab = tuple(x["vocabulary"]) if x.get("vocabulary") is not None else None
            return Feature(x["name"], x["kind"], vocab)
        return cls(
            max_prefix_len=int(d["max_prefix_len"]),
            case_features=tuple(feat(x) for x in d["case_features"]),
            event_features=tuple(feat(x) for x in d["event_features"]),
            activity_vocabulary=tuple(d["activity_vocabulary"]),
        )

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class EncodedInstance:
    features: np.ndarray
    label: bool
    case_id: str
    prefix_len: int


@dataclass
class EncodedDataset:
    """Encoded prefixes stored column-wise: ``X`` is (n, W), ``y`` is boolean."""

    schema: EncodingSchema
    X: np.ndarray
    y: np.ndarray
    case_ids: list
    prefix_lens: np.ndarray

    def __len__(self):
        return len(self.y)

    def __getitem__(self, i) -> EncodedInstance:
        return EncodedInstance(self.X[i], bool(self.y[i]), self.case_ids[i],
                               int(self.prefix_lens[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["case_id", "prefix_len", "label", *self.schema.column_names()])
        for i in range(len(self)):
            w.writerow([self.case_ids[i], int(self.prefix_lens[i]), int(self.y[i]),
                        *(repr(float(v)) for v in self.X[i])])
        return out.getvalue()


def read_dataset_csv(text: str) -> tuple:
    """Inverse of :meth:`EncodedDataset.to_csv`: returns (X, y, case_ids, prefix_lens, names)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty dataset file")
    header, body = rows[0], rows[1:]
    if header[:3] != ["case_id", "prefix_len", "label"]:
        raise ValueError("not an encoded dataset CSV (bad header)")
    X = np.array([[float(v) for v in r[3:]] for r in body], dtype=np.float64).reshape(
        len(body), len(header) - 3)
    y = np.array([r[2] == "1" for r in body], dtype=bool)
    return X, y, [r[0] for r in body], np.array([int(r[1]) for r in body]), header[3:]


def _value_kind(v) -> str:
    from .eventlog import kind_of
    return kind_of(v)


def fit_schema(traces, max_prefix_len: int = 20) -> EncodingSchema:
    traces = list(traces)
    if not traces:
        raise EventLogError("cannot fit an encoding schema on zero traces")
    if max_prefix_len < 1:
        raise ValueError("max_prefix_len must be >= 1")
    activities = set()
    case_kinds, case_vals = {}, {}
    ev_kinds, ev_vals = {}, {}

    def note(kinds, vals, name, v, scope):
        k = _value_kind(v)
        if kinds.setdefault(name, k) != k:
            raise EventLogError(f"{scope} attribute {name!r} has mixed kinds")
        if k == "string":
            vals.setdefault(name, set()).add(v)

    for t in traces:
        for name, v in t.case_attributes.items():
            note(case_kinds, case_vals, name, v, "case")
        for e in t.events:
            activities.add(e.activity)
            for name, v in e.payload.items():
                note(ev_kinds, ev_vals, name, v, "event")

    def feats(kinds, vals):
        return tuple(
            Feature(n, k, tuple(sorted(vals.get(n, ()))) if k == "string" else None)
            for n, k in sorted(kinds.items())
        )

    return EncodingSchema(
        max_prefix_len=max_prefix_len,
        case_features=feats(case_kinds, case_vals),
        event_features=feats(ev_kinds, ev_vals),
        activity_vocabulary=tuple(sorted(activities)),
    )


def extract_prefixes(trace, max_prefix_len: int) -> list:
    """Prefixes of lengths 1..min(len(trace), max_prefix_len) as event tuples."""
    n = min(len(trace.events), max_prefix_len)
    return [trace.events[:k] for k in range(1, n + 1)]


def _numeric(v, start_ms) -> float:
    if isinstance(v, bool):
        return 1.0 if v else 0.0
    if isinstance(v, datetime):
        return (datetime_to_ms(v) - start_ms) / 1000.0
    return float(v)


def _encode_full(trace, schema: EncodingSchema, n_events: int) -> np.ndarray:
    """Encode the first ``n_events`` events of ``trace``; later slots are PAD."""
    row = np.zeros(schema.width, dtype=np.float64)
    start = trace.events[0].timestamp
    col = 0
    for f in schema.case_features:
        v = trace.case_attributes.get(f.name)
        if f.categorical:
            idx = schema._vocab_index[f.name].get(v, len(f.vocabulary))
            row[col + idx] = 1.0
            col += len(f.vocabulary) + 1
        else:
            row[col] = 0.0 if v is None else _numeric(v, start)
            col += 1
    pad_act = schema.activity_width - 2
    other_act = schema.activity_width - 1
    for i in range(schema.max_prefix_len):
        if i < n_events:
            e = trace.events[i]
            row[col + schema._act_index.get(e.activity, other_act)] = 1.0
        else:
            e = None
            row[col + pad_act] = 1.0
        col += schema.activity_width
        for f in schema.event_features:
            if f.categorical:
                nv = len(f.vocabulary)
                if e is None:
                    row[col + nv] = 1.0
                else:
                    v = e.payload.get(f.name)
                    row[col + schema._vocab_index[f.name].get(v, nv + 1)] = 1.0
                col += nv + 2
            else:
                if e is not None and f.name in e.payload:
                    row[col] = _numeric(e.payload[f.name], start)
                col += 1
    assert col == schema.width, "encoded width mismatch"
    return row


class _PrefixView:
    """Minimal trace-like wrapper so a bare event tuple can be encoded."""

    def __init__(self, events, case_attributes):
        self.events = tuple(events)
        self.case_attributes = case_attributes


def encode_prefix(prefix, schema: EncodingSchema, label: bool, case_id: str = "",
                  case_attributes: dict | None = None) -> EncodedInstance:
    """Encode one prefix (a Trace or a sequence of events)."""
    if hasattr(prefix, "case_attributes"):
        attrs = prefix.case_attributes if case_attributes is None else case_attributes
        case_id = case_id or getattr(prefix, "case_id", "")
        events = prefix.events
    else:
        attrs = case_attributes or {}
        events = tuple(prefix)
    k = len(events)
    if not 1 <= k <= schema.max_prefix_len:
        raise ValueError(f"prefix length {k} outside [1, {schema.max_prefix_len}]")
    row = _encode_full(_PrefixView(events, attrs), schema, k)
    return EncodedInstance(row, bool(label), case_id, k)


def encode_set(traces, schema: EncodingSchema, labels: dict,
               max_prefix_len: int | None = None) -> EncodedDataset:
    """Encode every prefix of every trace, ordered by trace start then prefix length."""
    cap = schema.max_prefix_len if max_prefix_len is None else min(max_prefix_len,
                                                                  schema.max_prefix_len)
    traces = sorted(traces, key=lambda t: t.start_time)
    W = schema.width
    n_rows = sum(min(len(t.events), cap) for t in traces)
    X = np.zeros((n_rows, W), dtype=np.float64)
    y = np.zeros(n_rows, dtype=bool)
    lens = np.zeros(n_rows, dtype=np.int32)
    case_ids = []
    r = 0
    iw, cw, aw = schema.index_width, schema.case_width, schema.activity_width
    for t in traces:
        if t.case_id not in labels:
            raise KeyError(f"no label for case {t.case_id!r}")
        lab = bool(labels[t.case_id])
        k = min(len(t.events), cap)
        full = _encode_full(t, schema, k)
        # prefix of length j = full row with slots j+1..k switched to PAD
        pad_slot = np.zeros(iw)
        pad_slot[aw - 2] = 1.0
        col = aw
        for f in schema.event_features:
            if f.categorical:
                pad_slot[col + len(f.vocabulary)] = 1.0
                col += len(f.vocabulary) + 2
            else:
                col += 1
        block = np.repeat(full[None, :], k, axis=0)
        for j in range(1, k):
            s = cw + j * iw
            block[:j, s:s + iw] = pad_slot
        X[r:r + k] = block
        y[r:r + k] = lab
        lens[r:r + k] = np.arange(1, k + 1)
        case_ids += [t.case_id] * k
        r += k
    return EncodedDataset(schema, X, y, case_ids, lens)


__all__ = [
    "PAD", "OTHER", "Feature", "EncodingSchema", "EncodedInstance", "EncodedDataset",
    "fit_schema", "extract_prefixes", "encode_prefix", "encode_set", "read_dataset_csv",
]
