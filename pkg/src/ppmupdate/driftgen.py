"""Synthetic loan-application log with one abrupt concept drift.

The process is block structured (activities, sequences, exclusive choices,
parallel blocks, optional blocks). The drift combines a re-sequentialisation,
an inserted activity, an optionalised activity and slower durations for two
activities. Cases before the drift point replay the base model, the rest the
drifted one.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .eventlog import Event, EventLog, Trace

HOUR_MS = 3_600_000


class DriftSpecError(ValueError):
    pass


# --- control-flow blocks ---------------------------------------------------

@dataclass(frozen=True)
class Activity:
    name: str


@dataclass(frozen=True)
class Sequence:
    children: tuple


@dataclass(frozen=True)
class Xor:
    """Exclusive choice; ``branches`` is a tuple of (probability, block)."""
    branches: tuple

    def __post_init__(self):
        total = math.fsum(p for p, _ in self.branches)
        if abs(total - 1.0) > 1e-9 or any(p < 0 for p, _ in self.branches):
            raise DriftSpecError(f"branch probabilities must sum to 1, got {total}")


@dataclass(frozen=True)
class Parallel:
    children: tuple


@dataclass(frozen=True)
class Optional:
    block: object
    p: float

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise DriftSpecError(f"optional execution probability {self.p} not in (0, 1]")


def _children(b):
    if isinstance(b, (Sequence, Parallel)):
        return list(b.children)
    if isinstance(b, Xor):
        return [blk for _, blk in b.branches]
    if isinstance(b, Optional):
        return [b.block]
    return []


def activities_of(block) -> list:
    """Activity names in definition order (each once)."""
    if isinstance(block, Activity):
        return [block.name]
    out = []
    for c in _children(block):
        for a in activities_of(c):
            if a not in out:
                out.append(a)
    return out


@dataclass(frozen=True)
class ProcessModel:
    root: object
    durations: dict            # activity -> (median hours, log-normal sigma)
    mean_interarrival_hours: float = 1.0

    def __post_init__(self):
        missing = [a for a in activities_of(self.root) if a not in self.durations]
        if missing:
            raise DriftSpecError(f"no duration for {missing}")
        for a, (med, sig) in self.durations.items():
            if med < 0 or sig < 0:
                raise DriftSpecError(f"bad duration parameters for {a!r}")
        if self.mean_interarrival_hours <= 0:
            raise DriftSpecError("mean inter-arrival time must be positive")

    @property
    def alphabet(self) -> list:
        return sorted(activities_of(self.root))


def _seq(*names_or_blocks):
    return Sequence(tuple(Activity(x) if isinstance(x, str) else x for x in names_or_blocks))


def base_model() -> ProcessModel:
    """The fixed 18-activity loan-assessment process."""
    root = _seq(
        "Submit application",
        "Check completeness",
        Xor(((0.3, _seq("Request missing info", "Receive missing info")),
             (0.7, Sequence(())))),
        "Register application",
        Parallel((Activity("Credit history check"), Activity("Income verification"))),
        "Assess eligibility",
        Xor(((0.55, _seq("Prepare offer", "Send offer", "Receive signed offer")),
             (0.45, _seq("Reject application", "Notify rejection")))),
        "Verify documents",
        "Final approval",
        "Archive case",
        "Close case",
        "Update records",
    )
    durations = {
        "Submit application": (0.0, 0.0),
        "Check completeness": (1.0, 0.4),
        "Request missing info": (2.0, 0.4),
        "Receive missing info": (24.0, 0.5),
        "Register application": (1.0, 0.4),
        "Credit history check": (4.0, 0.5),
        "Income verification": (6.0, 0.5),
        "Assess eligibility": (2.0, 0.4),
        "Prepare offer": (4.0, 0.4),
        "Send offer": (1.0, 0.4),
        "Receive signed offer": (120.0, 0.3),
        "Reject application": (2.0, 0.4),
        "Notify rejection": (40.0, 0.3),
        "Verify documents": (2.0, 0.4),
        "Final approval": (3.0, 0.4),
        "Archive case": (1.0, 0.4),
        "Close case": (1.0, 0.4),
        "Update records": (1.0, 0.4),
    }
    return ProcessModel(root, durations)


# --- drift -----------------------------------------------------------------

@dataclass(frozen=True)
class DriftSpec:
    """Each edit is optional; ``None`` (or an empty slow_down) means no change."""
    resequentialize: tuple | None = ("Verify documents", "Final approval")
    insert: tuple | None = ("Check fraud risk", "Submit application")  # (new, after)
    insert_duration: tuple = (3.0, 0.4)
    optionalize: tuple | None = ("Receive signed offer", 0.5)
    slow_down: tuple = ("Reject application", "Notify rejection")
    slow_factor: float = 3.0

    def __post_init__(self):
        if self.slow_down and not self.slow_factor > 1.0:
            raise DriftSpecError("slow-down multiplier must be > 1")

    @classmethod
    def identity(cls) -> "DriftSpec":
        return cls(None, None, (0.0, 0.0), None, (), 2.0)

    def to_dict(self) -> dict:
        return {"resequentialize": list(self.resequentialize or []) or None,
                "insert": list(self.insert or []) or None,
                "insert_duration": list(self.insert_duration),
                "optionalize": list(self.optionalize or []) or None,
                "slow_down": list(self.slow_down), "slow_factor": self.slow_factor}

    @classmethod
    def from_dict(cls, d: dict) -> "DriftSpec":
        base = cls()
        def tup(key):
            v = d.get(key, getattr(base, key))
            return tuple(v) if v is not None else None
        return cls(tup("resequentialize"), tup("insert"),
                   tuple(d.get("insert_duration", base.insert_duration)),
                   tup("optionalize"), tuple(d.get("slow_down", base.slow_down)),
                   float(d.get("slow_factor", base.slow_factor)))


def _map_sequences(block, fn):
    """Rebuild the tree bottom-up, applying ``fn`` to every Sequence."""
    if isinstance(block, Sequence):
        return fn(Sequence(tuple(_map_sequences(c, fn) for c in block.children)))
    if isinstance(block, Parallel):
        return Parallel(tuple(_map_sequences(c, fn) for c in block.children))
    if isinstance(block, Xor):
        return Xor(tuple((p, _map_sequences(c, fn)) for p, c in block.branches))
    if isinstance(block, Optional):
        return Optional(_map_sequences(block.block, fn), block.p)
    return block


def _map_activities(block, fn):
    if isinstance(block, Activity):
        return fn(block)
    if isinstance(block, Sequence):
        return Sequence(tuple(_map_activities(c, fn) for c in block.children))
    if isinstance(block, Parallel):
        return Parallel(tuple(_map_activities(c, fn) for c in block.children))
    if isinstance(block, Xor):
        return Xor(tuple((p, _map_activities(c, fn)) for p, c in block.branches))
    if isinstance(block, Optional):
        return Optional(_map_activities(block.block, fn), block.p)
    return block


def apply_drift(model: ProcessModel, spec: DriftSpec) -> ProcessModel:
    names = set(activities_of(model.root))

    def need(a):
        if a not in names:
            raise DriftSpecError(f"activity {a!r} not found in the model")

    root = model.root
    durations = dict(model.durations)

    if spec.resequentialize:
        a, b = spec.resequentialize
        need(a)
        need(b)
        hits = []

        def reseq(seq):
            kids = list(seq.children)
            for i in range(len(kids) - 1):
                if kids[i] == Activity(a) and kids[i + 1] == Activity(b):
                    hits.append(i)
                    kids[i:i + 2] = [Parallel((Activity(a), Activity(b)))]
                    return Sequence(tuple(kids))
            return seq
        root = _map_sequences(root, reseq)
        if not hits:
            raise DriftSpecError(f"{a!r} and {b!r} are not consecutive steps of a sequence")

    if spec.insert:
        new, after = spec.insert
        need(after)
        if new in names:
            raise DriftSpecError(f"inserted activity {new!r} already exists")
        hits = []

        def ins(seq):
            kids = list(seq.children)
            for i, k in enumerate(kids):
                if k == Activity(after):
                    hits.append(i)
                    kids.insert(i + 1, Activity(new))
                    return Sequence(tuple(kids))
            return seq
        root = _map_sequences(root, ins)
        if not hits:
            raise DriftSpecError(f"{after!r} is not a step of a sequence; cannot insert after it")
        durations[new] = tuple(spec.insert_duration)

    if spec.optionalize:
        target, p = spec.optionalize
        need(target)
        root = _map_activities(root, lambda act: Optional(act, float(p))
                               if act.name == target else act)

    for a in spec.slow_down:
        need(a)
        med, sig = durations[a]
        durations[a] = (med * spec.slow_factor, sig)

    return replace(model, root=root, durations=durations)


# --- simulation ------------------------------------------------------------

def _simulate(block, t, rng, draw, out):
    """Append (timestamp_ms, activity) pairs to ``out``; returns the end time."""
    if isinstance(block, Activity):
        t = t + draw(block.name)
        out.append((t, block.name))
        return t
    if isinstance(block, Sequence):
        for c in block.children:
            t = _simulate(c, t, rng, draw, out)
        return t
    if isinstance(block, Xor):
        probs = [p for p, _ in block.branches]
        k = int(rng.choice(len(probs), p=probs))
        return _simulate(block.branches[k][1], t, rng, draw, out)
    if isinstance(block, Parallel):
        return max(_simulate(c, t, rng, draw, out) for c in block.children)
    if isinstance(block, Optional):
        if rng.random() < block.p:
            return _simulate(block.block, t, rng, draw, out)
        return t
    raise TypeError(f"unknown block {block!r}")


def simulate_case(model: ProcessModel, start_ms: int, rng) -> list:
    """One execution as (timestamp_ms, activity) pairs, sorted stably by time.

    The first activity is recorded at ``start_ms``; every later activity is
    recorded when it completes.
    """
    first = True

    def draw(name):
        nonlocal first
        if first:
            first = False
            return 0
        med, sig = model.durations[name]
        hours = med * math.exp(sig * rng.standard_normal()) if med > 0 else 0.0
        return max(1, int(round(hours * HOUR_MS)))

    out = []
    _simulate(model.root, start_ms, rng, draw, out)
    out.sort(key=lambda p: p[0])
    return out


@dataclass
class GeneratorConfig:
    n_cases: int = 2000
    drift_at_fraction: float = 0.70
    seed: int = 42
    start: str = "2020-01-01T00:00:00+00:00"
    mean_interarrival_hours: float = 1.0
    drift: DriftSpec = field(default_factory=DriftSpec)
    durations: dict = field(default_factory=dict)   # overrides of base durations

    def __post_init__(self):
        if not 0.0 < self.drift_at_fraction < 1.0:
            raise DriftSpecError("drift_at_fraction must lie in (0, 1)")
        if self.n_cases < 1:
            raise DriftSpecError("n_cases must be positive")
        if isinstance(self.drift, dict):
            self.drift = DriftSpec.from_dict(self.drift)

    def to_dict(self) -> dict:
        return {"n_cases": self.n_cases, "drift_at_fraction": self.drift_at_fraction,
                "seed": self.seed, "start": self.start,
                "mean_interarrival_hours": self.mean_interarrival_hours,
                "drift": self.drift.to_dict(),
                "durations": {k: list(v) for k, v in self.durations.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        known = {"n_cases", "drift_at_fraction", "seed", "start", "mean_interarrival_hours",
                 "drift", "durations"}
        unknown = set(d) - known
        if unknown:
            raise DriftSpecError(f"unknown generator config keys {sorted(unknown)}")
        kw = dict(d)
        if "durations" in kw:
            kw["durations"] = {k: tuple(v) for k, v in kw["durations"].items()}
        return cls(**kw)

    def models(self):
        base = base_model()
        if self.durations:
            dur = dict(base.durations)
            dur.update(self.durations)
            base = replace(base, durations=dur)
        base = replace(base, mean_interarrival_hours=self.mean_interarrival_hours)
        return base, apply_drift(base, self.drift)


def drift_index(config: GeneratorConfig) -> int:
    return int(math.floor(config.drift_at_fraction * config.n_cases))


def generate(config: GeneratorConfig | None = None) -> EventLog:
    from .eventlog import datetime_to_ms, parse_timestamp

    cfg = config or GeneratorConfig()
    base, drifted = cfg.models()
    rng = np.random.default_rng(cfg.seed)
    boundary = drift_index(cfg)
    width = len(str(cfg.n_cases))
    t = datetime_to_ms(parse_timestamp(cfg.start))
    traces = []
    for i in range(cfg.n_cases):
        if i:
            # strictly increasing arrivals keep the start-time order equal to case order
            t = max(t + 1, t + int(round(rng.exponential(cfg.mean_interarrival_hours) * HOUR_MS)))
        model = base if i < boundary else drifted
        events = tuple(Event(a, ts) for ts, a in simulate_case(model, t, rng))
        traces.append(Trace(f"case_{i + 1:0{width}d}", events))
    return EventLog(tuple(traces))


# --- replay ----------------------------------------------------------------

def _shuffles(seqs):
    if not seqs:
        yield ()
        return
    if len(seqs) == 1:
        yield tuple(seqs[0])
        return
    a, rest = seqs[0], seqs[1:]
    for b in _shuffles(rest):
        n = len(a) + len(b)
        for pos in itertools.combinations(range(n), len(a)):
            out, ia, ib = [], 0, 0
            ps = set(pos)
            for k in range(n):
                if k in ps:
                    out.append(a[ia])
                    ia += 1
                else:
                    out.append(b[ib])
                    ib += 1
            yield tuple(out)


def language(block) -> set:
    """All activity sequences the (loop-free) block can produce."""
    if isinstance(block, Activity):
        return {(block.name,)}
    if isinstance(block, Sequence):
        out = {()}
        for c in block.children:
            out = {x + y for x in out for y in language(c)}
        return out
    if isinstance(block, Xor):
        return set().union(*(language(c) for p, c in block.branches if p > 0))
    if isinstance(block, Optional):
        return {()} | language(block.block)
    if isinstance(block, Parallel):
        out = set()
        for combo in itertools.product(*(sorted(language(c)) for c in block.children)):
            out.update(_shuffles(list(combo)))
        return out
    raise TypeError(f"unknown block {block!r}")


def replay(model: ProcessModel, trace) -> bool:
    """True iff the trace's activity sequence is a run of the model."""
    acts = tuple(trace.activities if hasattr(trace, "activities") else trace)
    return acts in language(model.root)
