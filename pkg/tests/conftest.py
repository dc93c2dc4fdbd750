"""Shared oracles and generators for the test suite."""

from __future__ import annotations

import random
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from geobound import expr as ex
from geobound.egd import Egd
from geobound.expr import BLOCK, NonnegSub, Prod, Sum, Var
from geobound.lang import (AddConst, And, CoreProgram, DecClamped, Fail, Flip, IfThenElse, Not,
                           Seq, SetZero, Skip, VarEq, While, parse)

def pytest_terminal_summary(terminalreporter):
    """Print one PASS/FAIL line per acceptance criterion (recorded by test_acceptance)."""
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(module.RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})")


settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

BENCHMARKS = Path(str(resources.files("geobound") / "benchmarks"))
FAIL = "fail"


def load(name: str) -> CoreProgram:
    return parse((BENCHMARKS / f"{name}.prob").read_text())


# --------------------------------------------------------------------------
# independent semantics oracle: dictionaries of points, loops run to a fuel cap

def holds_mass(e, point) -> Fraction:
    """Probability that event ``e`` holds at a fixed state."""
    if isinstance(e, VarEq):
        return Fraction(int(point[e.var] == e.value))
    if isinstance(e, Flip):
        return e.prob
    if isinstance(e, Not):
        return 1 - holds_mass(e.event, point)
    return holds_mass(e.left, point) * holds_mass(e.right, point)


def run_oracle(s, dist: dict, fuel: int = 200) -> dict:
    """Exact semantics over ``{point: mass}`` (key ``FAIL`` for failure).

    Loops iterate until no mass is left inside or ``fuel`` rounds have run;
    mass still looping after that is dropped, which is exact for loops whose
    iteration count is bounded by ``fuel``.
    """
    out: dict = {}

    def put(d, k, m):
        if m:
            d[k] = d.get(k, Fraction(0)) + m

    if isinstance(s, Skip):
        return dict(dist)
    if isinstance(s, Seq):
        return run_oracle(s.second, run_oracle(s.first, dist, fuel), fuel)
    if isinstance(s, Fail):
        put(out, FAIL, sum(dist.values(), Fraction(0)))
        return out
    if isinstance(s, (SetZero, AddConst, DecClamped)):
        for pt, m in dist.items():
            if pt == FAIL:
                put(out, FAIL, m)
                continue
            x = list(pt)
            if isinstance(s, SetZero):
                x[s.var] = 0
            elif isinstance(s, AddConst):
                x[s.var] += s.amount
            else:
                x[s.var] = max(x[s.var] - 1, 0)
            put(out, tuple(x), m)
        return out
    if isinstance(s, IfThenElse):
        yes, no = {}, {}
        for pt, m in dist.items():
            if pt == FAIL:
                put(out, FAIL, m)
                continue
            h = holds_mass(s.cond, pt)
            put(yes, pt, m * h)
            put(no, pt, m * (1 - h))
        for d in (run_oracle(s.then, yes, fuel), run_oracle(s.orelse, no, fuel)):
            for k, m in d.items():
                put(out, k, m)
        return out
    if isinstance(s, While):
        cur = dict(dist)
        for _ in range(fuel):
            inside = {}
            for pt, m in cur.items():
                if pt == FAIL:
                    put(out, FAIL, m)
                    continue
                h = holds_mass(s.cond, pt)
                put(inside, pt, m * h)
                put(out, pt, m * (1 - h))
            if not inside:
                return out
            cur = run_oracle(s.body, inside, fuel)
        return out
    raise TypeError(s)


def oracle(p: CoreProgram, fuel: int = 200) -> dict:
    return run_oracle(p.body, {(0,) * p.var_count: Fraction(1)}, fuel)


# --------------------------------------------------------------------------
# random programs

PROBS = [Fraction(0), Fraction(1, 4), Fraction(1, 3), Fraction(1, 2), Fraction(2, 3), Fraction(1)]


def random_event(rng: random.Random, n: int, depth: int):
    r = rng.random()
    if depth <= 0 or r < 0.4:
        if rng.random() < 0.6:
            return VarEq(rng.randrange(n), rng.randrange(4))
        return Flip(rng.choice(PROBS))
    if r < 0.7:
        return Not(random_event(rng, n, depth - 1))
    return And(random_event(rng, n, depth - 1), random_event(rng, n, depth - 1))


def random_loop_free(rng: random.Random, n: int, depth: int, fail_rate: float = 0.05):
    r = rng.random()
    if depth <= 0 or r < 0.3:
        k = rng.randrange(n)
        choice = rng.random()
        if choice < fail_rate:
            return Fail()
        if choice < 0.1:
            return Skip()
        if choice < 0.3:
            return SetZero(k)
        if choice < 0.7:
            return AddConst(k, rng.randrange(1, 3))
        return DecClamped(k)
    if r < 0.6:
        return Seq(random_loop_free(rng, n, depth - 1, fail_rate),
                   random_loop_free(rng, n, depth - 1, fail_rate))
    return IfThenElse(random_event(rng, n, 2), random_loop_free(rng, n, depth - 1, fail_rate),
                      random_loop_free(rng, n, depth - 1, fail_rate))


def random_program(rng: random.Random, max_vars: int = 3, depth: int = 6) -> CoreProgram:
    n = rng.randint(1, max_vars)
    names = tuple("xyz"[:n])
    return CoreProgram(names, random_loop_free(rng, n, depth))


@st.composite
def loop_free_programs(draw, max_vars: int = 3, depth: int = 5):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    return random_program(random.Random(seed), max_vars, depth)


def bounded_loop(rng: random.Random, n: int, depth: int) -> CoreProgram:
    """A program with a loop that runs at most 3 times (counter in the last variable)."""
    c = n  # extra counter variable
    body = Seq(AddConst(c, 1), random_loop_free(rng, n, depth, fail_rate=0.0))
    cond = And(Not(VarEq(c, 3)), Flip(rng.choice(PROBS[1:])))
    prog = Seq(random_loop_free(rng, n, depth - 1, 0.0), While(cond, body, 0))
    return CoreProgram(tuple("xyz"[:n]) + ("c",), prog)


@st.composite
def bounded_loop_programs(draw, max_vars: int = 2, depth: int = 3):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = random.Random(seed)
    return bounded_loop(rng, rng.randint(1, max_vars), depth)


# --------------------------------------------------------------------------
# random EGDs

fractions = st.fractions(min_value=0, max_value=2, max_denominator=12)
decays = st.fractions(min_value=0, max_value=Fraction(9, 10), max_denominator=12)


@st.composite
def egds(draw, dims: int | None = None, max_side: int = 3):
    n = dims if dims is not None else draw(st.integers(1, 2))
    shape = tuple(draw(st.integers(1, max_side)) for _ in range(n))
    size = int(np.prod(shape))
    entries = draw(st.lists(fractions, min_size=size, max_size=size))
    block = np.empty(shape, dtype=object)
    for i, v in enumerate(entries):
        block.flat[i] = v
    decay = tuple(draw(decays) for _ in range(n))
    return Egd(block, decay)


@pytest.fixture
def rng():
    return random.Random(12345)


# --------------------------------------------------------------------------
# symbolic comparison by exact evaluation at random rational points

def same_value(a, b, names, trials: int = 3, seed: int = 7) -> bool:
    rng = random.Random(seed)
    for _ in range(trials):
        env = {n: Fraction(rng.randint(1, 97), 101) for n in names}
        va = ex.evaluate(a, env, exact=True)
        vb = ex.evaluate(b, env, exact=True)
        if va != vb:
            return False
    return True


# --------------------------------------------------------------------------
# independent exact evaluator: walks the node types directly

def independent_value(e, env):
    if not isinstance(e, ex.Expr):
        return Fraction(e)
    if isinstance(e, Var):
        return Fraction(env[e.name])
    if isinstance(e, Sum):
        return Fraction(e.const) + sum((Fraction(c) * independent_value(t, env) for t, c in e.terms), Fraction(0))
    if isinstance(e, Prod):
        out = Fraction(1)
        for f, k in e.factors:
            out *= independent_value(f, env) ** k
        return out
    assert isinstance(e, NonnegSub)
    return independent_value(e.a, env) - independent_value(e.b, env)


def independently_feasible(sys, values):
    env = sys.full_env({k: Fraction(v) for k, v in values.items()})
    for v in sys.vars:
        x = env[v.name]
        if x < 0 or (v.kind != BLOCK and x >= 1):
            return False
    for c in sys.constraints:
        lhs, rhs = independent_value(c.lhs, env), independent_value(c.rhs, env)
        if lhs > rhs or (c.strict and lhs == rhs):
            return False
    return True


def random_dag(rng: random.Random, xs, size: int = 12):
    pool = list(xs)
    for _ in range(size):
        a, b = rng.choice(pool), rng.choice(pool)
        op = rng.randrange(5)
        if op == 0:
            e = ex.add(a, ex.scale(b, Fraction(rng.randint(1, 5), 3)))
        elif op == 1:
            e = ex.mul(a, b)
        elif op == 2:
            e = ex.div(a, ex.add(1, b))  # denominators stay >= 1 on the test box
        elif op == 3:
            e = ex.power(a, rng.randint(2, 3))
        else:
            e = ex.add(ex.scale(a, Fraction(rng.randint(1, 4), 2)), Fraction(rng.randint(0, 3), 4))
        pool.append(e)
    return pool[-1]
