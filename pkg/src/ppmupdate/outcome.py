"""Outcome labelling: LTLf formulas over finite traces and the fast-case label.

Formula text grammar (loosest binding last)::

    formula  := implies
    implies  := or ( "->" implies )?          right-associative
    or       := and ( "|" and )*
    and      := until ( "&" until )*
    until    := unary ( "U" until )?          right-associative
    unary    := ("!" | "X" | "F" | "G") unary | primary
    primary  := IDENT | STRING | "true" | "false" | "(" formula ")"

Atoms are bare identifiers or double-quoted strings (``\\"`` and ``\\\\``
escapes). ``X``, ``F``, ``G``, ``U``, ``true`` and ``false`` are reserved as
bare words; quote them to use them as activity names.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .eventlog import EventLogError, Trace


class FormulaSyntaxError(ValueError):
    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


# --- AST -------------------------------------------------------------------

@dataclass(frozen=True)
class Formula:
    pass


@dataclass(frozen=True)
class Const(Formula):
    value: bool


@dataclass(frozen=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class Next(Formula):
    arg: Formula


@dataclass(frozen=True)
class Eventually(Formula):
    arg: Formula


@dataclass(frozen=True)
class Globally(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


UNARY = {"!": Not, "X": Next, "F": Eventually, "G": Globally}
_UNARY_SYM = {v: k for k, v in UNARY.items()}
_BINARY_SYM = {And: "&", Or: "|", Implies: "->", Until: "U"}
_KEYWORDS = {"X", "F", "G", "U", "true", "false"}
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


# --- parsing ---------------------------------------------------------------

def _tokenize(text: str):
    toks = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif text.startswith("->", i):
            toks.append(("->", None, i))
            i += 2
        elif c in "()!&|":
            toks.append((c, None, i))
            i += 1
        elif c == '"':
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    raise FormulaSyntaxError("unterminated string", i)
                if text[j] == "\\" and j + 1 < n:
                    buf.append(text[j + 1])
                    j += 2
                elif text[j] == '"':
                    break
                else:
                    buf.append(text[j])
                    j += 1
            toks.append(("atom", "".join(buf), i))
            i = j + 1
        else:
            m = _IDENT.match(text, i)
            if not m:
                raise FormulaSyntaxError(f"unexpected character {c!r}", i)
            word = m.group()
            if word in ("true", "false"):
                toks.append(("const", word == "true", i))
            elif word in _KEYWORDS:
                toks.append((word, None, i))
            else:
                toks.append(("atom", word, i))
            i = m.end()
    toks.append(("eof", None, n))
    return toks


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos][0]

    def take(self, kind=None):
        tok = self.toks[self.pos]
        if kind is not None and tok[0] != kind:
            raise FormulaSyntaxError(f"expected {kind!r}, found {tok[0]!r}", tok[2])
        self.pos += 1
        return tok

    def implies(self):
        left = self.disj()
        if self.peek() == "->":
            self.take()
            return Implies(left, self.implies())
        return left

    def disj(self):
        left = self.conj()
        while self.peek() == "|":
            self.take()
            left = Or(left, self.conj())
        return left

    def conj(self):
        left = self.until()
        while self.peek() == "&":
            self.take()
            left = And(left, self.until())
        return left

    def until(self):
        left = self.unary()
        if self.peek() == "U":
            self.take()
            return Until(left, self.until())
        return left

    def unary(self):
        kind = self.peek()
        if kind in UNARY:
            self.take()
            return UNARY[kind](self.unary())
        return self.primary()

    def primary(self):
        kind, value, at = self.take()
        if kind == "atom":
            return Atom(value)
        if kind == "const":
            return Const(value)
        if kind == "(":
            inner = self.implies()
            self.take(")")
            return inner
        if kind == "eof":
            raise FormulaSyntaxError("unexpected end of formula", at)
        raise FormulaSyntaxError(f"unexpected {kind!r}", at)


def parse_formula(text: str) -> Formula:
    if not text or not text.strip():
        raise FormulaSyntaxError("empty formula", 0)
    p = _Parser(text)
    f = p.implies()
    kind, _, at = p.toks[p.pos]
    if kind != "eof":
        raise FormulaSyntaxError(f"trailing input {kind!r}", at)
    return f


def format_formula(f: Formula) -> str:
    """Render ``f`` so that ``parse_formula(format_formula(f)) == f``."""
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        if _IDENT.fullmatch(f.name) and f.name not in _KEYWORDS:
            return f.name
        return '"' + f.name.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if type(f) in _UNARY_SYM:
        sym = _UNARY_SYM[type(f)]
        inner = format_formula(f.arg)
        return f"{sym}{inner}" if sym == "!" else f"{sym}({inner})"
    sym = _BINARY_SYM[type(f)]
    return f"({format_formula(f.left)} {sym} {format_formula(f.right)})"


# --- evaluation ------------------------------------------------------------

def _postorder(f: Formula, out: list, index: dict) -> int:
    if f in index:
        return index[f]
    if isinstance(f, (Const, Atom)):
        args = ()
    elif isinstance(f, (Not, Next, Eventually, Globally)):
        args = (_postorder(f.arg, out, index),)
    else:
        args = (_postorder(f.left, out, index), _postorder(f.right, out, index))
    index[f] = len(out)
    out.append((f, args))
    return index[f]


class CompiledFormula:
    """Formula flattened into a post-order program of shared subformulas.

    Each step fills one truth vector over trace positions with a single
    backward sweep, so a trace of length n costs O(n * |formula|).
    """

    def __init__(self, formula: Formula):
        self.formula = formula
        self.program = []
        _postorder(formula, self.program, {})

    def truth(self, activities) -> list:
        n = len(activities)
        vals = []
        for node, args in self.program:
            if isinstance(node, Const):
                v = [node.value] * n
            elif isinstance(node, Atom):
                v = [a == node.name for a in activities]
            elif isinstance(node, Not):
                v = [not x for x in vals[args[0]]]
            elif isinstance(node, And):
                a, b = vals[args[0]], vals[args[1]]
                v = [x and y for x, y in zip(a, b)]
            elif isinstance(node, Or):
                a, b = vals[args[0]], vals[args[1]]
                v = [x or y for x, y in zip(a, b)]
            elif isinstance(node, Implies):
                a, b = vals[args[0]], vals[args[1]]
                v = [(not x) or y for x, y in zip(a, b)]
            elif isinstance(node, Next):
                a = vals[args[0]]
                v = a[1:] + [False]  # strong next: false at the last position
            elif isinstance(node, Eventually):
                a = vals[args[0]]
                v = [False] * n
                acc = False
                for i in range(n - 1, -1, -1):
                    acc = acc or a[i]
                    v[i] = acc
            elif isinstance(node, Globally):
                a = vals[args[0]]
                v = [False] * n
                acc = True
                for i in range(n - 1, -1, -1):
                    acc = acc and a[i]
                    v[i] = acc
            elif isinstance(node, Until):
                a, b = vals[args[0]], vals[args[1]]
                v = [False] * n
                acc = False
                for i in range(n - 1, -1, -1):
                    acc = b[i] or (a[i] and acc)
                    v[i] = acc
            else:  # pragma: no cover
                raise TypeError(node)
            vals.append(v)
        return vals[-1]

    def __call__(self, trace) -> bool:
        acts = trace.activities if isinstance(trace, Trace) else list(trace)
        if not acts:
            raise ValueError("LTLf evaluation needs a non-empty trace")
        return bool(self.truth(acts)[0])


def compile_formula(f) -> CompiledFormula:
    if isinstance(f, str):
        f = parse_formula(f)
    return CompiledFormula(f)


def evaluate(formula, trace) -> bool:
    """Truth of ``formula`` at the first position of ``trace`` (LTLf)."""
    if not isinstance(formula, CompiledFormula):
        formula = compile_formula(formula)
    return formula(trace)


# --- labelers --------------------------------------------------------------

class LtlLabeler:
    kind = "ltl"

    def __init__(self, formula):
        self.compiled = compile_formula(formula)

    @property
    def formula(self) -> Formula:
        return self.compiled.formula

    def freeze(self, reference_log=None):
        return self

    def __call__(self, trace: Trace) -> bool:
        return self.compiled(trace)

    def describe(self) -> dict:
        return {"type": "ltl", "formula": format_formula(self.formula)}


class FastCaseLabeler:
    """Positive iff the case's cycle time is strictly below a frozen mean."""

    kind = "fast_case"

    def __init__(self, threshold: float | None = None):
        self.threshold = threshold

    def freeze(self, reference_log):
        traces = list(reference_log)
        if not traces:
            raise EventLogError("fast-case reference log is empty")
        self.threshold = math.fsum(t.cycle_time for t in traces) / len(traces)
        return self

    def __call__(self, trace: Trace) -> bool:
        if self.threshold is None:
            raise RuntimeError("FastCaseLabeler used before freeze()")
        return trace.cycle_time < self.threshold

    def describe(self) -> dict:
        return {"type": "fast_case", "threshold_seconds": self.threshold}


def make_labeler(spec) -> "LtlLabeler | FastCaseLabeler":
    """Build a labeler from a config dict, a formula string or the word "fast_case"."""
    if isinstance(spec, (LtlLabeler, FastCaseLabeler)):
        return spec
    if isinstance(spec, str):
        if spec.replace("-", "_") == "fast_case":
            return FastCaseLabeler()
        return LtlLabeler(spec)
    kind = spec.get("type", "ltl")
    if kind == "fast_case":
        return FastCaseLabeler(spec.get("threshold_seconds"))
    if kind == "ltl":
        return LtlLabeler(spec["formula"])
    raise ValueError(f"unknown labeler type {kind!r}")


def label_log(log, labeler, reference_log=None) -> dict:
    """Label every complete trace; returns {case_id: bool} in log order."""
    traces = list(log)
    if not traces:
        raise EventLogError("cannot label an empty log")
    if isinstance(labeler, FastCaseLabeler) and labeler.threshold is None:
        if reference_log is None:
            raise ValueError("fast-case labelling needs a reference log")
        labeler.freeze(reference_log)
    return {t.case_id: bool(labeler(t)) for t in traces}


__all__ = [
    "Formula", "Const", "Atom", "Not", "Next", "Eventually", "Globally",
    "And", "Or", "Implies", "Until", "FormulaSyntaxError",
    "parse_formula", "format_formula", "compile_formula", "evaluate",
    "LtlLabeler", "FastCaseLabeler", "make_labeler", "label_log",
]
