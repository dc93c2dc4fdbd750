import random
from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import (FAIL, bounded_loop_programs, load, loop_free_programs, oracle, random_event,
                      run_oracle)
from geobound.lang import AddConst, Flip, VarEq, parse, unroll
from geobound.limits import Deadline, AnalysisTimeout, ResourceLimitError
from geobound.measure import (MassInterval, StateDist, finite_moment, initial_dist,
                              lower_semantics, normalization_bounds, posterior_bounds,
                              residual_mass, restrict_event)
from geobound.support import SupportBox, analyze_support


def as_dict(d: StateDist) -> dict:
    out = {pt: m for pt, m in d.items() if m}
    if d.failure:
        out[FAIL] = d.failure
    return out


def die_lower(u=3):
    p = load("die_paradox")
    return p, lower_semantics(unroll(p, u), initial_dist(p))


# restrict_event ------------------------------------------------------------

def test_restrict_event_holds_everywhere():
    mu = StateDist.dirac((1, 6))
    assert restrict_event(mu, VarEq(1, 6)).equals(mu)


def test_restrict_flip_halves_and_drops_failure():
    mu = StateDist.from_points(1, {(0,): F(1, 2), (3,): F(1, 4)}, failure=F(1, 4))
    out = restrict_event(mu, Flip(F(1, 2)))
    assert as_dict(out) == {(0,): F(1, 4), (3,): F(1, 8)}


def test_restrict_die_even():
    mu = StateDist.from_points(1, {(v,): F(1, 6) for v in range(1, 7)})
    even = parse("if x in {2, 4, 6} { skip; }").body.cond
    assert as_dict(restrict_event(mu, even)) == {(2,): F(1, 6), (4,): F(1, 6), (6,): F(1, 6)}


def test_restrict_outside_box_is_zero():
    assert restrict_event(StateDist.dirac((2,)), VarEq(0, 5)).total() == 0


# lower semantics ----------------------------------------------------------

def test_die_paradox_lower_semantics():
    _, lo = die_lower(3)
    assert lo.failure == F(2, 3)
    assert lo.mass_at((1, 6)) == F(1, 6)
    assert lo.mass_at((2, 6)) == F(1, 18)
    assert lo.state_mass() == F(1, 6) + F(1, 18)


def test_skip_is_identity():
    mu = StateDist.from_points(2, {(0, 1): F(1, 3), (2, 2): F(1, 3)}, failure=F(1, 3))
    assert lower_semantics(parse("skip;"), mu).equals(mu)


def test_shift():
    assert lower_semantics(parse("x += 2;"), StateDist.dirac((3,))).equals(StateDist.dirac((5,)))


def test_dec_clamped_folds_zero_and_one():
    mu = StateDist.from_points(1, {(0,): F(1, 4), (1,): F(1, 4), (3,): F(1, 2)})
    out = lower_semantics(parse("x -= 1;"), mu)
    assert as_dict(out) == {(0,): F(1, 2), (2,): F(1, 2)}


def test_fail_moves_everything():
    mu = StateDist.from_points(1, {(0,): F(1, 4), (2,): F(1, 4)}, failure=F(1, 2))
    out = lower_semantics(parse("fail;"), mu)
    assert out.state_mass() == 0 and out.failure == 1


def test_loops_are_cut():
    p = parse("while flip(1/2) { x += 1; }")
    assert lower_semantics(p, initial_dist(p)).total() == 0


def test_cell_cap():
    p = parse("x ~ uniform(0, 50); y ~ uniform(0, 50); z ~ uniform(0, 50);")
    with pytest.raises(ResourceLimitError):
        lower_semantics(p, initial_dist(p), cell_cap=1000)


def test_deadline():
    p = unroll(parse("while flip(1/2) { x += 1; }"), 200)
    with pytest.raises(AnalysisTimeout):
        lower_semantics(p, initial_dist(p), deadline=Deadline(0.0))


# residual mass ------------------------------------------------------------

def test_die_paradox_residual():
    p = load("die_paradox")
    assert residual_mass(p, initial_dist(p), 3) == F(1, 9)


def test_loop_free_residual_zero():
    p = parse("x ~ uniform(0, 3); if x = 2 { x += 1; } else { skip; }")
    for u in range(3):
        assert residual_mass(p, initial_dist(p), u) == 0


@pytest.mark.parametrize("k", range(0, 8))
def test_geometric_counter_residual(k):
    p = load("geometric_counter")
    # independent count: mass still looping after k unrollings is (1/2)^k
    assert residual_mass(p, initial_dist(p), k) == F(1, 2 ** k)


# posterior bounds ----------------------------------------------------------

def test_die_paradox_normalized_bounds():
    p, lo = die_lower(3)
    res = F(1, 9)
    _, n16 = posterior_bounds(lo, res, (1, 6))
    _, n26 = posterior_bounds(lo, res, (2, 6))
    _, n36 = posterior_bounds(lo, res, (3, 6))
    assert (n16.lo, n16.hi) == (F(1, 2), F(5, 4))
    assert (n26.lo, n26.hi) == (F(1, 6), F(3, 4))
    assert (n36.lo, n36.hi) == (F(0), F(1, 2))


def test_die_paradox_normalization():
    _, lo = die_lower(3)
    z = normalization_bounds(lo, F(1, 9))
    assert (z.lo, z.hi) == (F(2, 9), F(1, 3))


def test_residual_support_refinement():
    p, lo = die_lower(3)
    _, box = analyze_support(unroll(p, 3), SupportBox.point((0, 0)))
    un, norm = posterior_bounds(lo, F(1, 9), (1, 6), residual_support=box)
    assert un.lo == un.hi == F(1, 6)
    assert norm.hi == F(1, 6) / F(2, 9)


def test_zero_residual_is_exact():
    p = parse("x ~ uniform(0, 2);")
    lo = lower_semantics(p, initial_dist(p))
    for v in range(3):
        un, norm = posterior_bounds(lo, F(0), (v,))
        assert un.lo == un.hi and norm.lo == norm.hi == F(1, 3)


def test_failure_point_and_undefined_posterior():
    p = parse("fail;")
    lo = lower_semantics(p, initial_dist(p))
    un, norm = posterior_bounds(lo, F(0), FAIL)
    assert un.lo == 1 and norm is None
    _, norm = posterior_bounds(lo, F(0), (0,))
    assert norm is None


def test_normalized_upper_infinite_when_denominator_vanishes():
    p = parse("while flip(1/2) { x += 1; }")
    lo = lower_semantics(unroll(p, 1), initial_dist(p))
    # residual 1/2 and state mass 1/2: lower bound on the normalizer is still 1/2 > 0
    _, norm = posterior_bounds(lo, F(1, 2), (0,))
    assert norm.hi == 2
    _, norm = posterior_bounds(lo, F(1), (0,))
    assert norm.hi == float("inf")


def test_mass_interval_invariant():
    with pytest.raises(ValueError):
        MassInterval(F(1, 2), F(1, 4))


# moments -------------------------------------------------------------------

def test_finite_moments():
    assert finite_moment(StateDist.dirac((3,)), 0, 2) == 9
    assert finite_moment(StateDist.zero(2), 1, 3) == 0
    _, lo = die_lower(3)
    assert finite_moment(lo, 0, 1) == F(5, 18)


# properties ---------------------------------------------------------------

@given(loop_free_programs())
def test_loop_free_matches_oracle(p):
    assert as_dict(lower_semantics(p, initial_dist(p))) == oracle(p)


@given(loop_free_programs(), st.integers(0, 2 ** 31))
def test_mass_non_increase_and_linearity(p, seed):
    rng = random.Random(seed)
    n = p.var_count
    pts = {tuple(rng.randrange(3) for _ in range(n)): F(rng.randint(1, 5), 20) for _ in range(3)}
    mu = StateDist.from_points(n, pts)
    nu = StateDist.dirac(tuple(rng.randrange(3) for _ in range(n)), F(1, 7))
    r = F(rng.randint(1, 9), 7)
    out = lower_semantics(p, mu)
    assert out.total() == mu.total()  # no loops: only failure moves mass, none is lost
    # scaling
    assert as_dict(lower_semantics(p, mu.scale(r))) == {k: v * r for k, v in as_dict(out).items()}
    # additivity, checked through the oracle on the summed input
    both = dict(pts)
    key = tuple(nu.offset)
    both[key] = both.get(key, 0) + F(1, 7)
    summed = as_dict(lower_semantics(p, StateDist.from_points(n, both)))
    separate = dict(as_dict(out))
    for k, v in as_dict(lower_semantics(p, nu)).items():
        separate[k] = separate.get(k, 0) + v
    assert summed == separate


@given(st.integers(0, 2 ** 31))
def test_restrict_event_linearity(seed):
    rng = random.Random(seed)
    e = random_event(rng, 2, 3)
    pts = {(rng.randrange(4), rng.randrange(4)): F(rng.randint(1, 5), 11) for _ in range(4)}
    mu = StateDist.from_points(2, pts)
    r = F(rng.randint(1, 5), 3)
    base = as_dict(restrict_event(mu, e))
    assert as_dict(restrict_event(mu.scale(r), e)) == {k: v * r for k, v in base.items()}
    # restriction never exceeds the input, and E and not-E partition the states
    from geobound.lang import Not
    neg = as_dict(restrict_event(mu, Not(e)))
    for pt, m in pts.items():
        assert base.get(pt, 0) + neg.get(pt, 0) == m


@given(bounded_loop_programs())
def test_soundness_sandwich_on_bounded_loops(p):
    exact = oracle(p)
    mu = initial_dist(p)
    prev = None
    for u in range(0, 6):
        lo = lower_semantics(unroll(p, u), mu)
        res = mu.total() - lo.total()
        for pt, m in exact.items():
            low = lo.failure if pt == FAIL else lo.mass_at(pt)
            assert low <= m <= low + res
        if prev is not None:
            assert res <= prev
        prev = res
    # the loop runs at most 3 times: 4 unrollings are exact
    assert as_dict(lower_semantics(unroll(p, 4), mu)) == exact


@pytest.mark.parametrize("name", ["die_paradox", "geometric_counter", "asym_rw",
                                  "coupon_collector2", "sum_of_geometrics"])
def test_residual_non_increasing(name):
    p = load(name)
    mu = initial_dist(p)
    values = [residual_mass(p, mu, u) for u in range(11)]
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert values[-1] < values[0]


def test_oracle_agrees_with_unrolled_lower_bound():
    # a deterministic check of the oracle itself
    p = parse("x ~ bernoulli(1/2); y += 1;")
    assert oracle(p) == {(0, 1): F(1, 2), (1, 1): F(1, 2)}
    assert run_oracle(AddConst(0, 1), {(0,): F(1)}) == {(1,): F(1)}
