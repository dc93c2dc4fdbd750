"""Geometric bound semantics with symbolic unknowns.

Walking a program over an EGD whose entries may be expressions produces the
bounding EGD for the output together with the polynomial inequalities that the
unknowns (invariant blocks, decay rates, contraction factors) must satisfy.
Each loop gets a contraction invariant ``<R, g>`` with factor ``c``:

    entry <= <R, g>,    body(<R, g> | E) <= c * <R, g>,    output = (<R, g> / (1 - c)) | !E

Invariant shapes come from the interval support analysis: variables with a
finite loop-head range get decay 0 and a block covering the range, unbounded
ones get ``d`` free slices starting at their lower bound.

With ``fix`` given, decay rates and contraction factors are replaced by
constants, leaving a system that is linear in the block unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import networkx as nx
import numpy as np

from . import expr as ex
from .egd import (Egd, expand_block, le_pairs, marginal_block, moment_1d,
                  total_mass_block, zeros)
from .expr import BLOCK, CONTRACTION, DECAY, Expr, Var
from .lang import (AddConst, And, CoreProgram, DecClamped, Event, Fail, Flip,
                   IfThenElse, Not, Seq, SetZero, Skip, Statement, VarEq, While,
                   unroll)
from .limits import NO_DEADLINE, Deadline
from .support import BOTTOM, INF, SupportBox, loop_head, refine, refine_not, transfer

ZERO = Fraction(0)
_nnsub = np.frompyfunc(ex.nnsub, 2, 1)


def _is_zero(x) -> bool:
    return ex.is_num(x) and x == 0


@dataclass(frozen=True, eq=False)
class SymEgd:
    block: np.ndarray
    decay: tuple  # each a Fraction or a decay Var

    @property
    def dims(self) -> int:
        return self.block.ndim

    @staticmethod
    def from_egd(g: Egd) -> "SymEgd":
        return SymEgd(g.block, tuple(g.decay))

    @staticmethod
    def zero(n: int) -> "SymEgd":
        return SymEgd(zeros((1,) * n), (ZERO,) * n)


@dataclass(frozen=True)
class Objective:
    kind: str = "ev"  # "mass" | "ev" | "tail"
    var: int = 0

    def __post_init__(self):
        if self.kind not in ("mass", "ev", "tail"):
            raise ValueError(f"unknown objective {self.kind!r}")


@dataclass(frozen=True)
class GenOptions:
    d: int = 1
    u: int = 0
    objective: Objective | None = Objective()
    strict_join: bool = True

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("invariant size must be at least 1")
        if self.u < 0:
            raise ValueError("unrolling depth must be non-negative")


@dataclass
class VarInfo:
    name: str
    kind: str
    origins: list = field(default_factory=list)

    @property
    def upper(self) -> float:
        return INF if self.kind == BLOCK else 1.0


@dataclass(frozen=True)
class Constraint:
    lhs: object
    rhs: object
    strict: bool = False

    def __str__(self):
        rel = "<" if self.strict else "<="
        return f"{ex.format_expr(self.lhs)} {rel} {ex.format_expr(self.rhs)}"


@dataclass
class ConstraintSystem:
    vars: list[VarInfo]
    constraints: list[Constraint]
    objective: object = None
    aliases: dict[str, str] = field(default_factory=dict)

    def var_info(self, name: str) -> VarInfo:
        name = self.resolve(name)
        for v in self.vars:
            if v.name == name:
                return v
        raise KeyError(name)

    def resolve(self, name: str) -> str:
        while name in self.aliases:
            name = self.aliases[name]
        return name

    def full_env(self, values: dict) -> dict:
        """Extend an assignment of representatives to every aliased name."""
        env = dict(values)
        for name in self.aliases:
            env[name] = values[self.resolve(name)]
        return env

    def canonical(self, e):
        """``e`` with every aliased unknown replaced by its representative."""
        if not isinstance(e, Expr) or not self.aliases:
            return e

        def mapping(v: Var):
            r = self.resolve(v.name)
            return v if r == v.name else ex.var(r, v.kind)
        return ex.substitute(e, mapping)

    def names(self, kind: str | None = None) -> list[str]:
        return [v.name for v in self.vars if kind is None or v.kind == kind]

    def constant_violations(self) -> list[Constraint]:
        out = []
        for c in self.constraints:
            if ex.is_num(c.lhs) and ex.is_num(c.rhs):
                if c.lhs > c.rhs or (c.strict and c.lhs == c.rhs):
                    out.append(c)
        return out

    def dump(self) -> str:
        lines = [f"# {v.kind} {v.name}" for v in self.vars]
        if self.objective is not None:
            lines.append(f"# minimize {ex.format_expr(self.objective)}")
        lines.extend(str(c) for c in self.constraints)
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# event and statement rules (generic over entry type)

def tidy(block: np.ndarray, decay: Sequence) -> tuple:
    """Zero every decay whose last block slice is identically zero (the tail is zero anyway)."""
    out = list(decay)
    for k, a in enumerate(decay):
        if not _is_zero(a) and all(_is_zero(x) for x in block.take([-1], axis=k).flat):
            out[k] = ZERO
    return tuple(out)


def restrict(g: SymEgd, e: Event) -> SymEgd:
    """Bounding EGD of the restriction to event ``e``."""
    if isinstance(e, VarEq):
        k, a = e.var, e.value
        shape = list(g.block.shape)
        shape[k] = max(shape[k], a + 2)
        full = expand_block(g.block, g.decay, shape)
        out = zeros(shape)
        sl = [slice(None)] * g.dims
        sl[k] = a
        out[tuple(sl)] = full[tuple(sl)]
        return SymEgd(out, g.decay[:k] + (ZERO,) + g.decay[k + 1:])
    if isinstance(e, Flip):
        if e.prob == 1:
            return g
        if e.prob == 0:
            return SymEgd(zeros(g.block.shape), g.decay)
        return SymEgd(g.block * e.prob, g.decay)
    if isinstance(e, Not):
        r = restrict(g, e.event)
        full = expand_block(g.block, g.decay, r.block.shape)
        block = np.asarray(_nnsub(full, r.block), dtype=object)
        return SymEgd(block, tidy(block, g.decay))
    if isinstance(e, And):
        return restrict(restrict(g, e.left), e.right)
    raise TypeError(f"not an event: {e!r}")


def set_zero(g: SymEgd, k: int) -> SymEgd:
    s = g.block.shape[k]
    last = g.block.take([s - 1], axis=k)
    a = g.decay[k]
    head = g.block.take(range(s - 1), axis=k).sum(axis=k, keepdims=True) if s > 1 else None
    tail = last if _is_zero(a) else last / (1 - a)
    slice0 = tail if head is None else head + tail
    block = np.concatenate([slice0, zeros(slice0.shape)], axis=k)
    return SymEgd(block, g.decay[:k] + (ZERO,) + g.decay[k + 1:])


def add_const(g: SymEgd, k: int, amount: int) -> SymEgd:
    if amount == 0:
        return g
    pad = list(g.block.shape)
    pad[k] = amount
    return SymEgd(np.concatenate([zeros(pad), g.block], axis=k), g.decay)


def dec_clamped(g: SymEgd, k: int) -> SymEgd:
    shape = list(g.block.shape)
    shape[k] = max(shape[k], 3)
    full = np.moveaxis(expand_block(g.block, g.decay, shape), k, 0)
    out = full[1:].copy()
    out[0] = full[0] + full[1]
    return SymEgd(np.moveaxis(out, 0, k), g.decay)


def _support_of(g: Egd) -> SupportBox:
    nz = np.argwhere(np.vectorize(lambda x: x != 0, otypes=[bool])(g.block))
    if len(nz) == 0:
        return BOTTOM
    iv = []
    for k in range(g.dims):
        lo, hi = int(nz[:, k].min()), int(nz[:, k].max())
        last_nonzero = any(x != 0 for x in g.block.take([-1], axis=k).flat)
        if g.decay[k] > 0 and last_nonzero:
            hi = INF
        iv.append((lo, hi))
    return SupportBox(tuple(iv))


class _Generator:
    def __init__(self, n: int, opts: GenOptions, fix: dict | None, deadline: Deadline):
        self.n = n
        self.opts = opts
        self.fix = fix
        self.deadline = deadline
        self.vars: list[VarInfo] = []
        self.info: dict[str, VarInfo] = {}
        self.constraints: list[Constraint] = []
        self.parent: dict[str, str] = {}
        self.counts = {BLOCK: 0, DECAY: 0, CONTRACTION: 0}
        self.prefix = {BLOCK: "b", DECAY: "a", CONTRACTION: "c"}

    # unknowns
    def fresh(self, kind: str, origin=None):
        if self.fix is not None and kind != BLOCK:
            try:
                return Fraction(self.fix[origin])
            except KeyError:
                raise ValueError(f"fixed assignment has no value for {origin}") from None
        name = f"{self.prefix[kind]}{self.counts[kind]}"
        self.counts[kind] += 1
        info = VarInfo(name, kind, [origin] if origin is not None else [])
        self.vars.append(info)
        self.info[name] = info
        return ex.var(name, kind)

    def find(self, v: Var) -> Var:
        name = v.name
        while name in self.parent:
            name = self.parent[name]
        return v if name == v.name else ex.var(name, v.kind)

    def emit(self, lhs, rhs):
        if _is_zero(lhs) or lhs is rhs:
            return
        if ex.is_num(lhs) and ex.is_num(rhs) and lhs <= rhs:
            return
        self.constraints.append(Constraint(lhs, rhs))

    def emit_le(self, p: np.ndarray, alpha: Sequence, q: np.ndarray, beta: Sequence):
        alpha = tidy(p, alpha)
        for a, b in zip(alpha, beta):
            self.emit(a, b)
        for lhs, rhs in le_pairs(p, alpha, q, beta):
            self.emit(lhs, rhs)

    def join_decay(self, g, d):
        if isinstance(g, Var):
            g = self.find(g)
        if isinstance(d, Var):
            d = self.find(d)
        if g is d:
            return g
        if ex.is_num(g) and ex.is_num(d):
            return max(g, d)
        if _is_zero(g):
            return d
        if _is_zero(d):
            return g
        if not self.opts.strict_join:
            beta = self.fresh(DECAY, ("join", len(self.vars)))
            self.emit(g, beta)
            self.emit(d, beta)
            return beta
        if isinstance(g, Var) and isinstance(d, Var):
            # unify: equal decays make the strict join exact
            keep, drop = (g, d) if g.uid < d.uid else (d, g)
            self.parent[drop.name] = keep.name
            return keep
        v, c = (g, d) if isinstance(g, Var) else (d, g)
        self.emit(c, v)
        return v

    def join(self, r: SymEgd, s: SymEgd) -> SymEgd:
        shape = tuple(map(max, r.block.shape, s.block.shape))
        beta = tuple(self.join_decay(g, d) for g, d in zip(r.decay, s.decay))
        block = expand_block(r.block, r.decay, shape) + expand_block(s.block, s.decay, shape)
        return SymEgd(block, beta)

    # statements
    def run(self, g: SymEgd, s: Statement, box: SupportBox) -> tuple[SymEgd, SupportBox]:
        if box.is_bottom:
            return SymEgd.zero(self.n), BOTTOM
        if isinstance(s, Skip):
            return g, box
        if isinstance(s, Seq):
            g, box = self.run(g, s.first, box)
            return self.run(g, s.second, box)
        if isinstance(s, SetZero):
            return set_zero(g, s.var), transfer(box, s)
        if isinstance(s, AddConst):
            return add_const(g, s.var, s.amount), transfer(box, s)
        if isinstance(s, DecClamped):
            return dec_clamped(g, s.var), transfer(box, s)
        if isinstance(s, IfThenElse):
            self.deadline.check()
            t, tb = self.run(restrict(g, s.cond), s.then, refine(box, s.cond))
            f, fb = self.run(restrict(g, Not(s.cond)), s.orelse, refine_not(box, s.cond))
            return self.join(t, f), tb.join(fb)
        if isinstance(s, Fail):
            return SymEgd.zero(self.n), BOTTOM
        if isinstance(s, While):
            return self.loop(g, s, box)
        raise TypeError(f"unsupported statement {s!r}")

    def loop(self, g: SymEgd, s: While, box: SupportBox) -> tuple[SymEgd, SupportBox]:
        head = loop_head(box, s)
        shape, lows, gamma = [], [], []
        for k in range(self.n):
            lo, hi = head[k]
            lows.append(lo)
            if hi != INF:
                shape.append(hi + 1)
                gamma.append(ZERO)
            else:
                shape.append(lo + self.opts.d)
                gamma.append(self.fresh(DECAY, ("decay", s.label, k)))
        r = zeros(shape)
        for idx in np.ndindex(*shape):
            if all(i >= lo for i, lo in zip(idx, lows)):
                r[idx] = self.fresh(BLOCK)
        gamma = tuple(gamma)
        c = self.fresh(CONTRACTION, ("contraction", s.label))
        self.emit_le(g.block, g.decay, r, gamma)
        inv = SymEgd(r, gamma)
        body, _ = self.run(restrict(inv, s.cond), s.body, refine(head, s.cond))
        self.emit_le(body.block, body.decay, r * c, gamma)
        out = restrict(SymEgd(r / (1 - c), gamma), Not(s.cond))
        return out, refine_not(head, s.cond)


def build_objective(out: SymEgd, objective: Objective | None):
    if objective is None:
        return None
    if objective.kind == "mass":
        return total_mass_block(out.block, out.decay)
    if objective.kind == "ev":
        block, decay = marginal_block(out.block, out.decay, objective.var)
        return moment_1d(block, decay[0], 1)
    return out.decay[objective.var]


def _finalize(gen: _Generator, objective) -> ConstraintSystem:
    aliases = {}
    for name in gen.parent:
        rep = name
        while rep in gen.parent:
            rep = gen.parent[rep]
        aliases[name] = rep
    reps = [v for v in gen.vars if v.name not in aliases]
    sys = ConstraintSystem(reps, gen.constraints, objective, aliases)
    if aliases:
        sys = _substitute_system(sys, {})
    return sys


def _same_var(x, y) -> bool:
    return isinstance(x, Var) and isinstance(y, Var) and x.name == y.name


def _substitute_system(sys: ConstraintSystem, extra: dict[str, str]) -> ConstraintSystem:
    aliases = dict(sys.aliases)
    aliases.update(extra)

    def resolve(name):
        while name in aliases:
            name = aliases[name]
        return name

    def mapping(v: Var):
        r = resolve(v.name)
        return v if r == v.name else ex.var(r, v.kind)

    roots = [x for c in sys.constraints for x in (c.lhs, c.rhs)] + [sys.objective]
    new = ex.substitute_many(roots, mapping)
    constraints = []
    for i, c in enumerate(sys.constraints):
        lhs, rhs = new[2 * i], new[2 * i + 1]
        if lhs is rhs or _is_zero(lhs) or _same_var(lhs, rhs):
            continue
        if ex.is_num(lhs) and ex.is_num(rhs) and lhs <= rhs:
            continue
        constraints.append(Constraint(lhs, rhs, c.strict))
    reps = []
    by_name = {v.name: v for v in sys.vars}
    for v in sys.vars:
        r = resolve(v.name)
        if r == v.name:
            reps.append(v)
        else:
            by_name[r].origins.extend(v.origins)
    return ConstraintSystem(reps, constraints, new[-1], {k: resolve(k) for k in aliases})


def generate_system(p: CoreProgram, init: Egd | None = None, opts: GenOptions = GenOptions(),
                    fix: dict | None = None,
                    deadline: Deadline = NO_DEADLINE) -> tuple[ConstraintSystem, SymEgd]:
    """Constraint system and symbolic output EGD for ``p`` unrolled ``opts.u`` times.

    Call inside :func:`geobound.expr.expr_context` for reproducible node order;
    :func:`generate` does this for you.
    """
    n = p.var_count
    init = init or Egd.dirac(n)
    gen = _Generator(n, opts, fix, deadline)
    body = unroll(p, opts.u).body
    out, _ = gen.run(SymEgd.from_egd(init), body, _support_of(init))
    sys = _finalize(gen, build_objective(out, opts.objective))
    return unify_cyclic_decays(sys), out


def relinearize(p: CoreProgram, init: Egd | None, opts: GenOptions, nonlinear_fix: dict,
                deadline: Deadline = NO_DEADLINE) -> tuple[ConstraintSystem, SymEgd]:
    """Regenerate at ``opts.u`` with decay rates and contraction factors fixed.

    ``nonlinear_fix`` maps loop origins (see :func:`fix_from_assignment`) to values.
    """
    return generate_system(p, init, opts, fix=nonlinear_fix, deadline=deadline)


def fix_from_assignment(sys: ConstraintSystem, values: dict) -> dict:
    """Map each loop origin of the nonlinear unknowns to its assigned value."""
    fix = {}
    for v in sys.vars:
        if v.kind != BLOCK:
            for origin in v.origins:
                fix[origin] = Fraction(values[v.name])
    return fix


def unify_cyclic_decays(sys: ConstraintSystem) -> ConstraintSystem:
    """Merge decay rates that are forced equal by cycles of atomic ``<=`` constraints."""
    graph = nx.DiGraph()
    for c in sys.constraints:
        if isinstance(c.lhs, Var) and isinstance(c.rhs, Var) and \
                c.lhs.kind == DECAY and c.rhs.kind == DECAY and not c.strict:
            graph.add_edge(c.lhs.name, c.rhs.name)
    order = {v.name: i for i, v in enumerate(sys.vars)}
    extra = {}
    for comp in nx.strongly_connected_components(graph):
        if len(comp) > 1:
            rep = min(comp, key=order.__getitem__)
            for name in comp:
                if name != rep:
                    extra[name] = rep
    if not extra:
        return sys
    return _substitute_system(sys, extra)


def generate(p: CoreProgram, init: Egd | None = None, opts: GenOptions = GenOptions(),
             fix: dict | None = None, deadline: Deadline = NO_DEADLINE):
    """:func:`generate_system` in a fresh expression context."""
    with ex.expr_context():
        return generate_system(p, init, opts, fix, deadline)


def evaluate_egd(g: SymEgd, sys: ConstraintSystem, values: dict) -> Egd:
    """Concrete (exact) EGD from a symbolic one under an assignment of the unknowns."""
    env = sys.full_env({k: Fraction(v) for k, v in values.items()})
    flat = list(g.block.flat)
    vals = ex.evaluate_many(flat, env, exact=True)
    block = np.empty(g.block.shape, dtype=object)
    for i, v in enumerate(vals):
        block.flat[i] = v
    decay = tuple(ex.evaluate(a, env, exact=True) for a in g.decay)
    return Egd(block, decay)
