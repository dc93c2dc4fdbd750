import random
from fractions import Fraction as F

import numpy as np
import pytest

from conftest import FAIL, load, oracle, random_program, same_value
from geobound import expr as ex
from geobound.egd import Egd
from geobound.expr import BLOCK, CONTRACTION, DECAY
from geobound.lang import Flip, Not, VarEq, parse
from geobound.solve import penalty_solve
from geobound.symgeo import (Constraint, ConstraintSystem, GenOptions, Objective, SymEgd,
                             VarInfo, add_const, dec_clamped, evaluate_egd, fix_from_assignment,
                             generate, relinearize, restrict, set_zero, unify_cyclic_decays)

NAMES = ["P00", "P01", "P10", "P11", "a1", "a2"]


@pytest.fixture
def example():
    """The 2x2 example EGD with symbolic entries and decays."""
    with ex.expr_context():
        v = {n: ex.var(n, DECAY if n[0] == "a" else BLOCK) for n in NAMES}
        P = np.array([[v["P00"], v["P01"]], [v["P10"], v["P11"]]], dtype=object)
        yield v, SymEgd(P, (v["a1"], v["a2"]))


def assert_block(got, want):
    want = np.array(want, dtype=object)
    assert got.shape == want.shape, (got.shape, want.shape)
    for g, w in zip(got.flat, want.flat):
        assert same_value(g, w, NAMES), (g, w)


# events -------------------------------------------------------------------

def test_restrict_var_eq(example):
    v, g = example
    r = restrict(g, VarEq(1, 2))
    assert_block(r.block, [[0, 0, v["P01"] * v["a2"], 0], [0, 0, v["P11"] * v["a2"], 0]])
    assert r.decay == (v["a1"], 0)


def test_restrict_not_var_eq(example):
    v, g = example
    r = restrict(g, Not(VarEq(1, 2)))
    a2 = v["a2"]
    assert_block(r.block, [[v["P00"], v["P01"], 0, v["P01"] * a2 ** 2],
                           [v["P10"], v["P11"], 0, v["P11"] * a2 ** 2]])
    assert r.decay == (v["a1"], a2)


def test_restrict_flip(example):
    v, g = example
    assert restrict(g, Flip(F(1))) is g
    half = restrict(g, Flip(F(1, 2)))
    assert_block(half.block, [[v["P00"] / 2, v["P01"] / 2], [v["P10"] / 2, v["P11"] / 2]])


def test_restrict_complement_drops_dead_decay(example):
    # the complement of x2 >= 1 has a structurally zero last column: its decay is irrelevant
    v, g = example
    r = restrict(g, Not(Not(VarEq(1, 0))))
    assert r.decay[1] == 0


# statements ---------------------------------------------------------------

def test_set_zero(example):
    v, g = example
    out = set_zero(g, 1)
    assert_block(out.block, [[v["P00"] + v["P01"] / (1 - v["a2"]), 0],
                             [v["P10"] + v["P11"] / (1 - v["a2"]), 0]])
    assert out.decay == (v["a1"], 0)


def test_add_const(example):
    v, g = example
    out = add_const(g, 1, 2)
    assert_block(out.block, [[0, 0, v["P00"], v["P01"]], [0, 0, v["P10"], v["P11"]]])
    assert out.decay == g.decay


def test_dec_clamped(example):
    v, g = example
    out = dec_clamped(g, 1)
    assert_block(out.block, [[v["P00"] + v["P01"], v["P01"] * v["a2"]],
                             [v["P10"] + v["P11"], v["P11"] * v["a2"]]])


def test_skip_emits_nothing():
    sys, out = generate(parse("skip;"))
    assert sys.constraints == [] and sys.vars == []
    assert out.block.shape == (1,) and out.block[0] == 1


def test_fail_is_zero():
    sys, out = generate(parse("fail;"))
    assert all(x == 0 for x in out.block.flat)


# loops --------------------------------------------------------------------

def test_geometric_counter_system():
    sys, out = generate(load("geometric_counter"))
    assert [str(c) for c in sys.constraints] == ["1 <= b0", "1/2*b0 <= a0*b0*c0"]
    kinds = {v.name: v.kind for v in sys.vars}
    assert kinds == {"a0": DECAY, "b0": BLOCK, "c0": CONTRACTION}
    # objective with the block entry at its optimum p = 1
    a, c = ex.var("a0", DECAY), ex.var("c0", CONTRACTION)
    obj_p1 = ex.substitute(sys.objective, lambda x: F(1) if x.name == "b0" else x)
    assert same_value(obj_p1, a / (2 * (1 - c) * (1 - a) ** 2), ["a0", "c0"])


def test_asym_rw_matches_worked_constraints():
    sys, _ = generate(load("asym_rw"), opts=GenOptions(objective=Objective("ev", 1)))
    # our invariant has one free entry per unbounded variable (size 1): the
    # worked example's P00, P10 correspond to b0 and a0*b0
    b0, a0, a1, c0 = (ex.var("b0"), ex.var("a0", DECAY), ex.var("a1", DECAY),
                      ex.var("c0", CONTRACTION))
    P00, P10, al1, al2, c, r = b0, a0 * b0, a0, a1, c0, F(1, 4)
    worked = [
        (1, P10),
        ((1 - r) * P10, c * al2 * P00),
        ((1 - r) * al1 * P10, c * al2 * P10),
        ((1 - r) * al1 ** 2 * P10 + r * P10, c * al1 * al2 * P10),
    ]
    names = ["b0", "a0", "a1", "c0"]
    diffs = [ex.add(cn.lhs, ex.scale(cn.rhs, -1)) for cn in sys.constraints]
    assert len(diffs) == len(worked)
    for lhs, rhs in worked:
        d = ex.add(lhs, ex.scale(rhs, -1))
        assert any(same_value(d, g, names) for g in diffs), (lhs, rhs)


def test_counter_objective_expected_value():
    sys, _ = generate(load("geometric_counter"))
    env = {"a0": F(1, 2), "b0": F(1), "c0": F(1, 2)}
    # 1/2 * a / ((1-c)(1-a)^2) at a = c = 1/2
    assert ex.evaluate(sys.objective, env, exact=True) == F(2)


def test_naming_is_reproducible():
    p = load("coupon_collector5")
    assert generate(p)[0].dump() == generate(p)[0].dump()


def test_dump_format():
    text = generate(load("geometric_counter"))[0].dump()
    lines = text.splitlines()
    assert "1 <= b0" in lines and "1/2*b0 <= a0*b0*c0" in lines


BENCH = ["geometric_counter", "die_paradox", "asym_rw", "coupon_collector2", "coupon_collector5",
         "sum_of_geometrics", "fair_biased_coin", "conditioned_geometric", "dueling_cowboys",
         "power_of_two", "sym_rw"]


@pytest.mark.parametrize("name", BENCH)
def test_entry_linearity_and_atomic_decays(name):
    sys, out = generate(load(name), opts=GenOptions(u=2))
    for c in sys.constraints:
        assert ex.degree(ex.add(c.lhs, ex.scale(c.rhs, -1)), {BLOCK}) <= 1
    for a in out.decay:
        assert ex.is_num(a) or isinstance(a, ex.Var)
    declared = {v.name for v in sys.vars}
    used = {v.name for v in ex.free_vars([x for c in sys.constraints for x in (c.lhs, c.rhs)])}
    assert used <= declared


@pytest.mark.parametrize("name", BENCH)
def test_relinearize_is_linear(name):
    p = load(name)
    with ex.expr_context():
        sys0, _ = generate(p)
        # any in-domain values for the nonlinear unknowns will do for the degree audit
        values = {v.name: F(1, 2) for v in sys0.vars}
        fix = fix_from_assignment(sys0, values)
        sysu, _ = relinearize(p, None, GenOptions(u=3), fix)
    for v in sysu.vars:
        assert v.kind == BLOCK
    for c in sysu.constraints:
        assert ex.degree(ex.add(c.lhs, ex.scale(c.rhs, -1)), {BLOCK}) <= 1
    assert ex.degree(sysu.objective, {BLOCK}) <= 1


def test_relinearize_same_depth_same_feasibility():
    p = load("geometric_counter")
    with ex.expr_context():
        sys0, _ = generate(p)
        rep = penalty_solve(sys0)
        assert rep.feasible
        fix = fix_from_assignment(sys0, rep.assignment)
        lin, _ = relinearize(p, None, GenOptions(u=0), fix)
    from geobound.solve import optimize_linear
    assert optimize_linear(lin).feasible


# cyclic decay unification --------------------------------------------------

def _decay_system(edges, n):
    with ex.expr_context():
        vs = [ex.var(f"a{i}", DECAY) for i in range(n)]
        cons = [Constraint(vs[i], vs[j]) for i, j in edges]
        return ConstraintSystem([VarInfo(v.name, DECAY) for v in vs], cons, vs[0])


def test_unify_two_cycle():
    sys = unify_cyclic_decays(_decay_system([(0, 1), (1, 0)], 2))
    assert [v.name for v in sys.vars] == ["a0"] and sys.constraints == []
    assert sys.resolve("a1") == "a0"


def test_unify_three_cycle():
    sys = unify_cyclic_decays(_decay_system([(0, 1), (1, 2), (2, 0)], 3))
    assert len(sys.vars) == 1 and sys.constraints == []


def test_unify_acyclic_unchanged():
    before = _decay_system([(0, 1), (1, 2)], 3)
    after = unify_cyclic_decays(before)
    assert after is before


# precision on loop-free programs ---------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_loop_free_precision(seed):
    p = random_program(random.Random(1000 + seed))
    sys, out = generate(p)
    assert sys.names(BLOCK) == [] and sys.names(DECAY) == []
    g = evaluate_egd(out, sys, {})
    exact = {k: m for k, m in oracle(p).items() if k != FAIL}
    assert all(a == 0 for a in g.decay)
    for idx in np.ndindex(*(s + 2 for s in g.shape)):
        assert g.mass_at(idx) == exact.pop(idx, 0)
    assert exact == {}


def test_loop_free_precision_with_geometric_input():
    init = Egd.of([[F(1, 4), F(1, 8)], [F(1, 16), F(1, 32)]], [F(1, 3), F(1, 2)])
    p = parse("if y = 0 { x += 1; } else { y -= 1; }")
    assert p.var_names == ("y", "x")
    sys, out = generate(p, init=init)
    assert sys.constraints == []
    g = evaluate_egd(out, sys, {})

    def want(y, x):
        m = init.mass_at((y + 1, x))
        if y == 0 and x >= 1:
            m += init.mass_at((0, x - 1))
        return m
    for y in range(6):
        for x in range(8):
            assert g.mass_at((y, x)) == want(y, x)
