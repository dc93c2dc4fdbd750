"""Interval over-approximation of variable supports.

Boxes are tuples of ``(lo, hi)`` pairs with ``hi`` possibly ``math.inf``; the
empty support is :data:`BOTTOM`.  Loops are iterated with plain joins for a few
rounds and then widened, which always terminates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .lang import (AddConst, And, CoreProgram, DecClamped, Event, Fail, Flip,
                   IfThenElse, Not, Seq, SetZero, Skip, Statement, VarEq, While)

INF = math.inf
WIDENING_DELAY = 3
NARROWING_ROUNDS = 3


@dataclass(frozen=True)
class SupportBox:
    intervals: tuple[tuple[int, float], ...] | None  # None is the empty support

    @staticmethod
    def point(p) -> "SupportBox":
        return SupportBox(tuple((x, x) for x in p))

    @staticmethod
    def top(n: int) -> "SupportBox":
        return SupportBox(((0, INF),) * n)

    @property
    def is_bottom(self) -> bool:
        return self.intervals is None

    def __getitem__(self, k: int) -> tuple[int, float]:
        return self.intervals[k]

    def contains(self, point) -> bool:
        if self.intervals is None:
            return False
        return all(a <= x <= b for x, (a, b) in zip(point, self.intervals))

    def leq(self, other: "SupportBox") -> bool:
        if self.intervals is None:
            return True
        if other.intervals is None:
            return False
        return all(c <= a and b <= d for (a, b), (c, d) in zip(self.intervals, other.intervals))

    def join(self, other: "SupportBox") -> "SupportBox":
        if self.intervals is None:
            return other
        if other.intervals is None:
            return self
        return SupportBox(tuple((min(a, c), max(b, d))
                                for (a, b), (c, d) in zip(self.intervals, other.intervals)))

    def with_interval(self, k: int, lo, hi) -> "SupportBox":
        if self.intervals is None:
            return self
        if lo > hi:
            return BOTTOM
        iv = list(self.intervals)
        iv[k] = (lo, hi)
        return SupportBox(tuple(iv))

    def bounded(self, k: int) -> bool:
        return self.intervals is not None and self.intervals[k][1] != INF


BOTTOM = SupportBox(None)


def widen(a: SupportBox, b: SupportBox) -> SupportBox:
    """Interval widening: unstable lower bounds drop to 0, unstable upper bounds to infinity."""
    if a.is_bottom:
        return b
    if b.is_bottom:
        return a
    out = []
    for (lo1, hi1), (lo2, hi2) in zip(a.intervals, b.intervals):
        out.append((lo1 if lo1 <= lo2 else 0, hi1 if hi1 >= hi2 else INF))
    return SupportBox(tuple(out))


# --------------------------------------------------------------------------
# events

def refine(box: SupportBox, e: Event) -> SupportBox:
    """Over-approximate the states of ``box`` satisfying ``e``."""
    if box.is_bottom:
        return box
    if isinstance(e, VarEq):
        lo, hi = box[e.var]
        return box.with_interval(e.var, e.value, e.value) if lo <= e.value <= hi else BOTTOM
    if isinstance(e, Flip):
        return BOTTOM if e.prob == 0 else box
    if isinstance(e, Not):
        return refine_not(box, e.event)
    if isinstance(e, And):
        return refine(refine(box, e.left), e.right)
    raise TypeError(f"not an event: {e!r}")


def refine_not(box: SupportBox, e: Event) -> SupportBox:
    """Over-approximate the states of ``box`` violating ``e``."""
    if box.is_bottom:
        return box
    if isinstance(e, VarEq):
        lo, hi = box[e.var]
        if lo == hi == e.value:
            return BOTTOM
        if lo == e.value:
            return box.with_interval(e.var, lo + 1, hi)
        if hi == e.value:
            return box.with_interval(e.var, lo, hi - 1)
        return box
    if isinstance(e, Flip):
        return BOTTOM if e.prob == 1 else box
    if isinstance(e, Not):
        return refine(box, e.event)
    if isinstance(e, And):
        # !(x && y) = !x || (x && !y)
        return refine_not(box, e.left).join(refine_not(refine(box, e.left), e.right))
    raise TypeError(f"not an event: {e!r}")


# --------------------------------------------------------------------------
# statements

def loop_head(box: SupportBox, loop: While) -> SupportBox:
    """Support invariant at the head of ``loop`` when entered from ``box``.

    Ascending rounds (widened after a delay) reach a post-fixpoint; a few
    descending rounds then recover bounds that widening threw away.
    """
    def step(head: SupportBox) -> SupportBox:
        return box.join(transfer(refine(head, loop.cond), loop.body))

    head = box
    rounds = 0
    while True:
        new = head.join(step(head))
        if rounds >= WIDENING_DELAY:
            new = widen(head, new)
        if new == head:
            break
        head = new
        rounds += 1
    for _ in range(NARROWING_ROUNDS):
        new = step(head)
        if new == head:
            break
        head = new
    return head


def transfer(box: SupportBox, s: Statement) -> SupportBox:
    """Abstract post-state of ``s`` (exact semantics; loops run to their fixpoint)."""
    if box.is_bottom or isinstance(s, Skip):
        return box
    if isinstance(s, Seq):
        return transfer(transfer(box, s.first), s.second)
    if isinstance(s, SetZero):
        return box.with_interval(s.var, 0, 0)
    if isinstance(s, AddConst):
        lo, hi = box[s.var]
        return box.with_interval(s.var, lo + s.amount, hi + s.amount)
    if isinstance(s, DecClamped):
        lo, hi = box[s.var]
        return box.with_interval(s.var, max(lo - 1, 0), max(hi - 1, 0))
    if isinstance(s, IfThenElse):
        return transfer(refine(box, s.cond), s.then).join(
            transfer(refine_not(box, s.cond), s.orelse))
    if isinstance(s, Fail):
        return BOTTOM
    if isinstance(s, While):
        return refine_not(loop_head(box, s), s.cond)
    raise TypeError(f"not a statement: {s!r}")


def _with_residual(s: Statement, box: SupportBox, resid: SupportBox):
    if isinstance(s, Seq):
        box, resid = _with_residual(s.first, box, resid)
        return _with_residual(s.second, box, resid)
    if isinstance(s, IfThenElse):
        tb, tr = _with_residual(s.then, refine(box, s.cond), refine(resid, s.cond))
        eb, er = _with_residual(s.orelse, refine_not(box, s.cond), refine_not(resid, s.cond))
        return tb.join(eb), tr.join(er)
    if isinstance(s, While):
        # everything reaching a loop of the analysed program is cut off by the lower semantics
        out = transfer(box, s)
        return out, out
    return transfer(box, s), transfer(resid, s)


def analyze_support(p: CoreProgram | Statement, init: SupportBox) -> tuple[SupportBox, SupportBox]:
    """Return ``(post, residual_support)`` for a (typically unrolled) program.

    ``residual_support`` contains the support of the mass that the lower-bound
    semantics drops at the remaining loops.
    """
    body = p.body if isinstance(p, CoreProgram) else p
    return _with_residual(body, init, BOTTOM)
