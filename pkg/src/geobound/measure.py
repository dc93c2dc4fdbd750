"""Exact finite-support measures over program states.

A :class:`StateDist` stores a dense box of rational masses over ``N^n`` (with a
lower-corner offset) plus the mass of the failure state.  The transfer
functions implement the standard semantics of events and loop-free statements;
loops are cut to the zero measure, which yields the lower-bound semantics of an
unrolled program.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np

from .lang import (AddConst, And, CoreProgram, DecClamped, Event, Fail, Flip,
                   IfThenElse, Not, Seq, SetZero, Skip, Statement, VarEq, While,
                   unroll)
from .limits import NO_DEADLINE, Deadline, ResourceLimitError

ZERO = Fraction(0)
INF = math.inf
DEFAULT_CELL_CAP = 10 ** 8
FAIL = "fail"  # the failure state, as a point argument


def _zeros(shape) -> np.ndarray:
    return np.full(shape, ZERO, dtype=object)


@dataclass(frozen=True, eq=False)
class StateDist:
    offset: tuple[int, ...]
    masses: np.ndarray
    failure: Fraction = ZERO

    # construction
    @staticmethod
    def zero(n: int) -> "StateDist":
        return StateDist((0,) * n, _zeros((1,) * n))

    @staticmethod
    def dirac(point: tuple[int, ...], mass: Fraction = Fraction(1)) -> "StateDist":
        arr = _zeros((1,) * len(point))
        arr[(0,) * len(point)] = Fraction(mass)
        return StateDist(tuple(point), arr)

    @staticmethod
    def from_points(n: int, points: dict[tuple[int, ...], Fraction], failure=ZERO) -> "StateDist":
        if not points:
            return StateDist((0,) * n, _zeros((1,) * n), Fraction(failure))
        lo = tuple(min(p[k] for p in points) for k in range(n))
        hi = tuple(max(p[k] for p in points) for k in range(n))
        arr = _zeros(tuple(h - l + 1 for l, h in zip(lo, hi)))
        for p, m in points.items():
            arr[tuple(a - b for a, b in zip(p, lo))] += Fraction(m)
        return StateDist(lo, arr, Fraction(failure))

    # queries
    @property
    def dims(self) -> int:
        return len(self.offset)

    def mass_at(self, point) -> Fraction:
        if point == FAIL:
            return self.failure
        idx = tuple(p - o for p, o in zip(point, self.offset))
        if any(i < 0 or i >= s for i, s in zip(idx, self.masses.shape)):
            return ZERO
        return self.masses[idx]

    def state_mass(self) -> Fraction:
        return sum(self.masses.flat, ZERO)

    def total(self) -> Fraction:
        return self.state_mass() + self.failure

    def items(self) -> Iterator[tuple[tuple[int, ...], Fraction]]:
        """Nonzero state masses in row-major order."""
        for idx in np.ndindex(*self.masses.shape):
            m = self.masses[idx]
            if m:
                yield tuple(i + o for i, o in zip(idx, self.offset)), m

    def as_dict(self) -> dict:
        return dict(self.items())

    def marginal(self, var: int) -> dict[int, Fraction]:
        axes = tuple(k for k in range(self.dims) if k != var)
        col = self.masses.sum(axis=axes) if axes else self.masses
        return {self.offset[var] + i: m for i, m in enumerate(col) if m}

    def support_box(self):
        """Per-variable [min, max] of the nonzero masses, or ``None`` if empty."""
        pts = [p for p, _ in self.items()]
        if not pts:
            return None
        return tuple((min(p[k] for p in pts), max(p[k] for p in pts)) for k in range(self.dims))

    def equals(self, other: "StateDist") -> bool:
        return self.failure == other.failure and self.as_dict() == other.as_dict()

    # arithmetic
    def scale(self, r: Fraction) -> "StateDist":
        if r == 0:
            return StateDist.zero(self.dims)
        return StateDist(self.offset, self.masses * r, self.failure * r)

    def states_only(self) -> "StateDist":
        return StateDist(self.offset, self.masses, ZERO)

    def _embedded(self, offset, shape) -> np.ndarray:
        if offset == self.offset and shape == self.masses.shape:
            return self.masses
        out = _zeros(shape)
        sl = tuple(slice(o - no, o - no + s)
                   for o, no, s in zip(self.offset, offset, self.masses.shape))
        out[sl] = self.masses
        return out

    def _common_box(self, other: "StateDist"):
        lo = tuple(map(min, self.offset, other.offset))
        hi = tuple(max(o + s for o, s in pair) for pair in zip(
            zip(self.offset, self.masses.shape), zip(other.offset, other.masses.shape)))
        return lo, tuple(h - l for h, l in zip(hi, lo))

    def __add__(self, other: "StateDist") -> "StateDist":
        off, shape = self._common_box(other)
        return StateDist(off, self._embedded(off, shape) + other._embedded(off, shape),
                         self.failure + other.failure)

    def minus_states(self, other: "StateDist") -> "StateDist":
        """State part of ``self - other``; requires ``other <= self`` pointwise."""
        off, shape = self._common_box(other)
        diff = self._embedded(off, shape) - other._embedded(off, shape)
        return StateDist(off, diff)

    def trimmed(self) -> "StateDist":
        """Shrink the box to the nonzero support."""
        nz = np.nonzero(self.masses != ZERO)
        if len(nz[0]) == 0:
            return StateDist((0,) * self.dims, _zeros((1,) * self.dims), self.failure)
        lo = [int(a.min()) for a in nz]
        hi = [int(a.max()) + 1 for a in nz]
        if lo == [0] * self.dims and hi == list(self.masses.shape):
            return self
        sl = tuple(slice(a, b) for a, b in zip(lo, hi))
        off = tuple(o + a for o, a in zip(self.offset, lo))
        return StateDist(off, self.masses[sl], self.failure)


@dataclass(frozen=True)
class MassInterval:
    lo: Fraction
    hi: Fraction | float  # may be INF

    def __post_init__(self):
        if not 0 <= self.lo <= self.hi:
            raise ValueError(f"malformed interval [{self.lo}, {self.hi}]")

    def contains(self, x) -> bool:
        return self.lo <= x <= self.hi


# --------------------------------------------------------------------------
# events

def restrict_event(mu: StateDist, e: Event) -> StateDist:
    """``mu|_E``: restriction of the state part to the event; failure mass is dropped."""
    if isinstance(e, VarEq):
        k, a = e.var, e.value
        j = a - mu.offset[k]
        if j < 0 or j >= mu.masses.shape[k]:
            return StateDist.zero(mu.dims)
        off = mu.offset[:k] + (a,) + mu.offset[k + 1:]
        return StateDist(off, mu.masses.take([j], axis=k))
    if isinstance(e, Flip):
        return mu.states_only().scale(e.prob)
    if isinstance(e, Not):
        return mu.states_only().minus_states(restrict_event(mu, e.event))
    if isinstance(e, And):
        return restrict_event(restrict_event(mu, e.left), e.right)
    raise TypeError(f"not an event: {e!r}")


# --------------------------------------------------------------------------
# statements (lower-bound semantics: loops are cut to the zero measure)

class _Interp:
    def __init__(self, cell_cap: int, deadline: Deadline):
        self.cell_cap = cell_cap
        self.deadline = deadline

    def guard(self, mu: StateDist) -> StateDist:
        if mu.masses.size > self.cell_cap:
            raise ResourceLimitError(
                f"distribution box of {mu.masses.size} cells exceeds the cap of {self.cell_cap}")
        return mu

    def run(self, s: Statement, mu: StateDist) -> StateDist:
        if isinstance(s, Skip):
            return mu
        if isinstance(s, Seq):
            return self.run(s.second, self.run(s.first, mu))
        if isinstance(s, SetZero):
            k = s.var
            arr = mu.masses.sum(axis=k, keepdims=True)
            return StateDist(mu.offset[:k] + (0,) + mu.offset[k + 1:], arr, mu.failure)
        if isinstance(s, AddConst):
            k = s.var
            off = mu.offset[:k] + (mu.offset[k] + s.amount,) + mu.offset[k + 1:]
            return self.guard(StateDist(off, mu.masses, mu.failure))
        if isinstance(s, DecClamped):
            return _dec_clamped(mu, s.var)
        if isinstance(s, IfThenElse):
            self.deadline.check()
            then = self.run(s.then, restrict_event(mu, s.cond))
            orelse = self.run(s.orelse, restrict_event(mu, Not(s.cond)))
            out = then + orelse
            out = StateDist(out.offset, out.masses, out.failure + mu.failure)
            return self.guard(out.trimmed())
        if isinstance(s, Fail):
            return StateDist((0,) * mu.dims, _zeros((1,) * mu.dims), mu.total())
        if isinstance(s, While):
            return StateDist.zero(mu.dims)
        raise TypeError(f"not a statement: {s!r}")


def _dec_clamped(mu: StateDist, k: int) -> StateDist:
    if mu.offset[k] >= 1:
        off = mu.offset[:k] + (mu.offset[k] - 1,) + mu.offset[k + 1:]
        return StateDist(off, mu.masses, mu.failure)
    if mu.masses.shape[k] == 1:
        return mu
    arr = np.moveaxis(mu.masses, k, 0)
    folded = arr[1:].copy()
    folded[0] = arr[0] + arr[1]
    return StateDist(mu.offset, np.moveaxis(folded, 0, k), mu.failure)


def lower_semantics(p: CoreProgram | Statement, mu: StateDist,
                    cell_cap: int = DEFAULT_CELL_CAP,
                    deadline: Deadline = NO_DEADLINE) -> StateDist:
    """Exact semantics with every remaining ``while`` replaced by the zero measure."""
    body = p.body if isinstance(p, CoreProgram) else p
    return _Interp(cell_cap, deadline).run(body, mu)


def initial_dist(p: CoreProgram) -> StateDist:
    return StateDist.dirac((0,) * p.var_count)


def residual_mass(p: CoreProgram, mu: StateDist, u: int, **kw) -> Fraction:
    return mu.total() - lower_semantics(unroll(p, u), mu, **kw).total()


def finite_moment(d: StateDist, var: int, k: int) -> Fraction:
    return sum((m * Fraction(x) ** k for x, m in d.marginal(var).items()), ZERO)


def normalization_bounds(lower: StateDist, residual: Fraction) -> MassInterval:
    """Bounds on the probability of avoiding failure, for an initial probability measure."""
    hi = 1 - lower.failure
    lo = max(hi - residual, ZERO)
    return MassInterval(lo, hi)


def _div(a, b):
    if b <= 0:
        return INF
    return a / b


def posterior_bounds(lower: StateDist, residual: Fraction, point,
                     residual_support=None) -> tuple[MassInterval, MassInterval | None]:
    """Unnormalized and normalized mass bounds at a state (or at :data:`FAIL`).

    ``residual_support`` is an optional box (anything with ``contains``)
    holding the support of the cut-off mass; points outside it get the exact
    lower value.  The normalized interval is ``None`` when the
    posterior is undefined (all mass may have failed) or for the failure state.
    """
    lo = lower.mass_at(point)
    hi = lo + residual
    if point != FAIL and residual_support is not None:
        if not residual_support.contains(point):
            hi = lo
    unnorm = MassInterval(lo, hi)
    if point == FAIL:
        return unnorm, None
    z = normalization_bounds(lower, residual)
    if z.hi <= 0:
        return unnorm, None
    norm_lo = lo / z.hi
    return unnorm, MassInterval(norm_lo, max(_div(hi, z.lo), norm_lo))
