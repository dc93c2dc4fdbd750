"""Core probabilistic language: AST, surface parser, desugaring, unrolling.

Programs manipulate a fixed set of natural-number variables, all zero at the
start.  The core statements are::

    skip | P; P | x := 0 | x += a | x -= 1 | if E {P} else {P} | while E {P} | fail

over events ``x = a | flip(p) | !E | E && E``.  Everything else accepted by
:func:`parse` (comparisons, set membership, ``||``, ``observe``, sampling
statements, probabilistic branching) is rewritten into the core on the fly.

Variables are indexed from 0 in the order of their first occurrence.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Union


# --------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class VarEq:
    var: int
    value: int


@dataclass(frozen=True)
class Flip:
    prob: Fraction


@dataclass(frozen=True)
class Not:
    event: "Event"


@dataclass(frozen=True)
class And:
    left: "Event"
    right: "Event"


Event = Union[VarEq, Flip, Not, And]


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Seq:
    first: "Statement"
    second: "Statement"


@dataclass(frozen=True)
class SetZero:
    var: int


@dataclass(frozen=True)
class AddConst:
    var: int
    amount: int


@dataclass(frozen=True)
class DecClamped:
    var: int


@dataclass(frozen=True)
class IfThenElse:
    cond: Event
    then: "Statement"
    orelse: "Statement"


@dataclass(frozen=True)
class While:
    cond: Event
    body: "Statement"
    label: int = 0  # index of the source loop; copies made by unrolling share it


@dataclass(frozen=True)
class Fail:
    pass


Statement = Union[Skip, Seq, SetZero, AddConst, DecClamped, IfThenElse, While, Fail]


@dataclass(frozen=True)
class CoreProgram:
    var_names: tuple[str, ...]
    body: Statement

    @property
    def var_count(self) -> int:
        return len(self.var_names)

    def var_index(self, name: str) -> int:
        try:
            return self.var_names.index(name)
        except ValueError:
            raise KeyError(f"unknown variable {name!r}") from None


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


FALSE = Flip(Fraction(0))
TRUE = Flip(Fraction(1))


def seq(*stmts: Statement) -> Statement:
    """Right-nested sequence; the empty sequence is ``skip``."""
    if not stmts:
        return Skip()
    out = stmts[-1]
    for s in reversed(stmts[:-1]):
        out = Seq(s, out)
    return out


def any_of(events: list[Event]) -> Event:
    """Disjunction encoded as ``!(!e1 && !e2 && ...)``; empty means false."""
    if not events:
        return FALSE
    if len(events) == 1:
        return events[0]
    acc: Event = Not(events[0])
    for e in events[1:]:
        acc = And(acc, Not(e))
    return Not(acc)


def member(var: int, values: list[int]) -> Event:
    return any_of([VarEq(var, v) for v in values])


def less_than(var: int, bound: int) -> Event:
    return member(var, list(range(bound)))


# --------------------------------------------------------------------------
# tokenizer

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>\d+(?:\.\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>:=|\+=|-=|==|!=|<=|>=|&&|\|\||\.\.|[=<>!~;,(){}\[\]/-])
""", re.VERBOSE)

_KEYWORDS = {"skip", "fail", "observe", "if", "else", "while", "flip", "in",
             "true", "false", "bernoulli", "geometric", "uniform"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


# --------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0
        self.names: list[str] = []
        self.loops = 0

    # helpers
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col)

    def at(self, text: str) -> bool:
        t = self.tok
        return t.text == text and t.kind in ("op", "ident")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        if not self.at(text):
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t

    def var(self) -> int:
        t = self.tok
        if t.kind != "ident" or t.text in _KEYWORDS:
            self.error(f"expected a variable name, found {t.text or 'end of input'!r}")
        self.i += 1
        if t.text not in self.names:
            self.names.append(t.text)
        return self.names.index(t.text)

    def natural(self) -> int:
        t = self.tok
        if t.kind == "op" and t.text == "-":
            self.error("negative literals are not allowed")
        if t.kind != "num" or "." in t.text:
            self.error(f"expected a natural number, found {t.text or 'end of input'!r}")
        self.i += 1
        return int(t.text)

    def probability(self) -> Fraction:
        t = self.tok
        if t.kind != "num":
            self.error(f"expected a probability, found {t.text or 'end of input'!r}")
        self.i += 1
        value = Fraction(t.text)
        if self.accept("/"):
            d = self.tok
            if d.kind != "num":
                self.error("expected a denominator")
            self.i += 1
            den = Fraction(d.text)
            if den == 0:
                self.error("zero denominator", d)
            value /= den
        if not 0 <= value <= 1:
            self.error(f"probability {value} outside [0, 1]", t)
        return value

    def next_label(self) -> int:
        self.loops += 1
        return self.loops - 1

    # statements
    def program(self) -> CoreProgram:
        body = self.block_body(top=True)
        if self.tok.kind != "eof":
            self.error(f"unexpected {self.tok.text!r}")
        names = tuple(self.names) or ("_",)
        return CoreProgram(names, body)

    def block_body(self, top: bool = False) -> Statement:
        stmts = []
        while not (self.tok.kind == "eof" or (not top and self.at("}"))):
            stmts.append(self.statement())
        return seq(*stmts)

    def block(self) -> Statement:
        self.expect("{")
        body = self.block_body()
        self.expect("}")
        return body

    def statement(self) -> Statement:
        t = self.tok
        if self.accept("skip"):
            self.expect(";")
            return Skip()
        if self.accept("fail"):
            self.expect(";")
            return Fail()
        if self.accept("observe"):
            e = self.event()
            self.expect(";")
            return IfThenElse(e, Skip(), Fail())
        if self.accept("if"):
            return self.if_rest()
        if self.accept("while"):
            label = self.next_label()
            e = self.event()
            return While(e, self.block(), label)
        if self.at("{"):
            left = self.block()
            self.expect("[")
            p = self.probability()
            self.expect("]")
            right = self.block()
            return IfThenElse(Flip(p), left, right)
        if t.kind == "ident" and t.text not in _KEYWORDS:
            x = self.var()
            s = self.assignment(x)
            self.expect(";")
            return s
        self.error(f"expected a statement, found {t.text or 'end of input'!r}")

    def if_rest(self) -> Statement:
        e = self.event()
        then = self.block()
        orelse: Statement = Skip()
        if self.accept("else"):
            orelse = self.if_rest() if self.accept("if") else self.block()
        return IfThenElse(e, then, orelse)

    def assignment(self, x: int) -> Statement:
        if self.accept(":="):
            c = self.natural()
            return SetZero(x) if c == 0 else Seq(SetZero(x), AddConst(x, c))
        if self.accept("+="):
            return AddConst(x, self.natural())
        if self.accept("-="):
            return seq(*[DecClamped(x)] * self.natural())
        if self.accept("~"):
            return self.sample(x)
        self.error(f"expected ':=', '+=', '-=' or '~', found {self.tok.text!r}")

    def sample(self, x: int) -> Statement:
        t = self.tok
        if self.accept("bernoulli"):
            self.expect("(")
            p = self.probability()
            self.expect(")")
            return IfThenElse(Flip(p), Seq(SetZero(x), AddConst(x, 1)), SetZero(x))
        if self.accept("geometric"):
            self.expect("(")
            p = self.probability()
            self.expect(")")
            return Seq(SetZero(x), While(Not(Flip(p)), AddConst(x, 1), self.next_label()))
        if self.accept("uniform"):
            self.expect("(")
            lo = self.natural()
            self.expect(",")
            hi = self.natural()
            self.expect(")")
            if hi < lo:
                self.error("empty uniform range", t)
            return _uniform(x, lo, hi)
        self.error(f"unknown distribution {t.text!r}")

    # events, C precedence: || < && < !
    def event(self) -> Event:
        parts = [self.conjunction()]
        while self.accept("||"):
            parts.append(self.conjunction())
        return any_of(parts) if len(parts) > 1 else parts[0]

    def conjunction(self) -> Event:
        e = self.negation()
        while self.accept("&&"):
            e = And(e, self.negation())
        return e

    def negation(self) -> Event:
        if self.accept("!"):
            return Not(self.negation())
        return self.atom()

    def atom(self) -> Event:
        t = self.tok
        if self.accept("("):
            e = self.event()
            self.expect(")")
            return e
        if self.accept("flip"):
            self.expect("(")
            p = self.probability()
            self.expect(")")
            return Flip(p)
        if self.accept("true"):
            return TRUE
        if self.accept("false"):
            return FALSE
        if t.kind == "ident" and t.text not in _KEYWORDS:
            x = self.var()
            return self.comparison(x)
        self.error(f"expected an event, found {t.text or 'end of input'!r}")

    def comparison(self, x: int) -> Event:
        if self.accept("=") or self.accept("=="):
            return VarEq(x, self.natural())
        if self.accept("!="):
            return Not(VarEq(x, self.natural()))
        if self.accept("<"):
            return less_than(x, self.natural())
        if self.accept("<="):
            return less_than(x, self.natural() + 1)
        if self.accept(">="):
            return Not(less_than(x, self.natural()))
        if self.accept(">"):
            return Not(less_than(x, self.natural() + 1))
        if self.accept("in"):
            self.expect("{")
            values: list[int] = []
            if not self.at("}"):
                while True:
                    a = self.natural()
                    if self.accept(".."):
                        values.extend(range(a, self.natural() + 1))
                    else:
                        values.append(a)
                    if not self.accept(","):
                        break
            self.expect("}")
            return member(x, values)
        self.error(f"expected a comparison, found {self.tok.text or 'end of input'!r}")


def _uniform(x: int, lo: int, hi: int) -> Statement:
    # if flip(1/n) {x := lo} else if flip(1/(n-1)) {x := lo+1} else ...
    def assign(c: int) -> Statement:
        return SetZero(x) if c == 0 else Seq(SetZero(x), AddConst(x, c))

    out = assign(hi)
    n = 1
    for c in range(hi - 1, lo - 1, -1):
        n += 1
        out = IfThenElse(Flip(Fraction(1, n)), assign(c), out)
    return out


def parse(source: str) -> CoreProgram:
    """Parse surface syntax into a desugared :class:`CoreProgram`."""
    return _Parser(source).program()


# --------------------------------------------------------------------------
# pretty printing (core syntax, re-parses to the same AST)

def format_event(e: Event, names: tuple[str, ...]) -> str:
    if isinstance(e, VarEq):
        return f"{names[e.var]} = {e.value}"
    if isinstance(e, Flip):
        return f"flip({e.prob})"
    if isinstance(e, Not):
        inner = format_event(e.event, names)
        return f"!({inner})" if isinstance(e.event, (And, VarEq)) else f"!{inner}"
    left = format_event(e.left, names)
    right = format_event(e.right, names)
    if isinstance(e.right, And):
        right = f"({right})"
    return f"{left} && {right}"


def _flatten(s: Statement) -> Iterator[Statement]:
    if isinstance(s, Seq):
        yield from _flatten(s.first)
        yield from _flatten(s.second)
    else:
        yield s


def _format_lines(s: Statement, names: tuple[str, ...], indent: int) -> Iterator[str]:
    pad = "    " * indent
    for t in _flatten(s):
        if isinstance(t, Skip):
            yield pad + "skip;"
        elif isinstance(t, Fail):
            yield pad + "fail;"
        elif isinstance(t, SetZero):
            yield pad + f"{names[t.var]} := 0;"
        elif isinstance(t, AddConst):
            yield pad + f"{names[t.var]} += {t.amount};"
        elif isinstance(t, DecClamped):
            yield pad + f"{names[t.var]} -= 1;"
        elif isinstance(t, IfThenElse):
            yield pad + f"if {format_event(t.cond, names)} {{"
            yield from _format_lines(t.then, names, indent + 1)
            yield pad + "} else {"
            yield from _format_lines(t.orelse, names, indent + 1)
            yield pad + "}"
        elif isinstance(t, While):
            yield pad + f"while {format_event(t.cond, names)} {{"
            yield from _format_lines(t.body, names, indent + 1)
            yield pad + "}"
        else:
            raise TypeError(f"not a statement: {t!r}")


def pretty(p: CoreProgram) -> str:
    return "\n".join(_format_lines(p.body, p.var_names, 0)) + "\n"


# --------------------------------------------------------------------------
# unrolling

def unroll_statement(s: Statement, u: int) -> Statement:
    if isinstance(s, Seq):
        return Seq(unroll_statement(s.first, u), unroll_statement(s.second, u))
    if isinstance(s, IfThenElse):
        return IfThenElse(s.cond, unroll_statement(s.then, u), unroll_statement(s.orelse, u))
    if isinstance(s, While):
        body = unroll_statement(s.body, u)
        out: Statement = While(s.cond, body, s.label)
        for _ in range(u):
            out = IfThenElse(s.cond, Seq(body, out), Skip())
        return out
    return s


def unroll(p: CoreProgram, u: int) -> CoreProgram:
    """Unroll every loop ``u`` times, ending each chain in the original loop."""
    if u < 0:
        raise ValueError("unrolling depth must be non-negative")
    return CoreProgram(p.var_names, unroll_statement(p.body, u))


def count_loops(s: Statement) -> int:
    if isinstance(s, Seq):
        return count_loops(s.first) + count_loops(s.second)
    if isinstance(s, IfThenElse):
        return count_loops(s.then) + count_loops(s.orelse)
    if isinstance(s, While):
        return 1 + count_loops(s.body)
    return 0


def is_loop_free(s: Statement) -> bool:
    return count_loops(s) == 0


def event_vars(e: Event) -> set[int]:
    if isinstance(e, VarEq):
        return {e.var}
    if isinstance(e, Flip):
        return set()
    if isinstance(e, Not):
        return event_vars(e.event)
    return event_vars(e.left) | event_vars(e.right)
