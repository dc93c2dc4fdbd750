"""End-to-end analysis and result rendering.

:func:`analyze` always runs the exact lower-bound semantics of the unrolled
program (it supplies every lower bound and the normalization interval).  In
residual mode the upper bounds come from the residual mass; in geometric mode
from a certified contraction-invariant EGD; "both" keeps the smaller upper
bound at every point.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

from . import expr as ex
from .egd import Egd, total_mass_block
from .expr import BLOCK
from .lang import CoreProgram, unroll
from .limits import NO_DEADLINE, AnalysisTimeout, Deadline
from .measure import (DEFAULT_CELL_CAP, INF, MassInterval, StateDist, finite_moment,
                      initial_dist, lower_semantics, normalization_bounds)
from .solve import NO_SOLUTION, TIMEOUT, PenaltySolver, SolveReport, optimize_linear, refine_nonlinear
from .support import SupportBox, analyze_support
from .symgeo import (ConstraintSystem, GenOptions, Objective, SymEgd, evaluate_egd,
                     fix_from_assignment, generate_system)

MODES = ("residual", "geometric", "both")


@dataclass
class AnalysisOptions:
    mode: str = "both"
    unroll: int = 30
    invariant_size: int = 1
    objective: str = "ev"  # "mass" | "ev" | "tail"
    var: int = 0
    moments: int = 2
    limit: int = 50
    seed: int = 0
    timeout: float | None = 300.0
    cell_cap: int = DEFAULT_CELL_CAP
    iterations: int = 5000

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.unroll < 0 or self.invariant_size < 1 or self.moments < 0 or self.limit < 0:
            raise ValueError("unroll, moments and limit must be >= 0 and invariant size >= 1")


@dataclass
class MomentBound:
    k: int
    lo: Fraction
    hi: Fraction | float


@dataclass
class VariableBounds:
    name: str
    masses: list[MassInterval]
    normalized_masses: list[MassInterval] | None
    moments: list[MomentBound]
    tail_decay: Fraction | None  # 0 means the marginal has finite support


@dataclass
class SolverInfo:
    status: str
    iterations: int = 0
    seconds: float | None = None


@dataclass
class BoundReport:
    program: str
    mode: str
    unroll: int
    invariant_size: int
    objective: str
    variables: list[VariableBounds] = field(default_factory=list)
    normalization: MassInterval | None = None
    total_mass: MassInterval | None = None
    solver: SolverInfo = field(default_factory=lambda: SolverInfo("not-run"))
    geometric: Egd | None = None
    lower: StateDist | None = None
    residual: Fraction | None = None
    constraint_system: ConstraintSystem | None = None

    def variable(self, name: str) -> VariableBounds:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)


# --------------------------------------------------------------------------
# geometric stage

@dataclass
class GeometricResult:
    report: SolveReport
    egd: Egd | None = None
    system: ConstraintSystem | None = None
    unroll: int = 0


def geometric_bound(p: CoreProgram, opts: AnalysisOptions, deadline: Deadline = NO_DEADLINE
                    ) -> GeometricResult:
    """Certified EGD upper bound on the unnormalized output distribution.

    The penalty search runs on the system without unrolling.  Its decay rates
    and contraction factors seed a refinement on the system at the requested
    depth, which is linear once those are fixed and is then solved exactly.
    If no depth-u candidate certifies, the bound without unrolling is kept.
    """
    objective = Objective(opts.objective, opts.var)
    with ex.expr_context():
        gen0 = GenOptions(d=opts.invariant_size, u=0, objective=objective)
        sys0, out0 = generate_system(p, None, gen0, deadline=deadline)
        solver = PenaltySolver(iterations=opts.iterations, rng_seed=opts.seed, deadline=deadline)
        rep = solver.solve(sys0)
        if rep.status == NO_SOLUTION:
            rep = _linear_search(sys0, _tiebreak(sys0, out0, opts), rep, opts, deadline)
        if not rep.feasible:
            return GeometricResult(rep, system=sys0)
        best = GeometricResult(rep, _concrete(out0, sys0, rep.assignment), sys0, 0)
        fix = fix_from_assignment(sys0, rep.assignment)
        genu = GenOptions(d=opts.invariant_size, u=opts.unroll, objective=objective)

        lin, sysu, outu = _refined_linear(p, genu, fix, opts, deadline)
        if not lin.feasible:
            sysu, outu = generate_system(p, None, genu, fix=fix, deadline=deadline)
            lin = optimize_linear(sysu, tiebreak=_tiebreak(sysu, outu, opts), deadline=deadline)
        if not lin.feasible:
            return best
        lin.iterations = rep.iterations
        lin.seconds += rep.seconds
        return GeometricResult(lin, _concrete(outu, sysu, lin.assignment), sys0, opts.unroll)


def _tiebreak(sys: ConstraintSystem, out: SymEgd, opts: AnalysisOptions):
    if opts.objective != "tail":
        return None
    return sys.canonical(total_mass_block(out.block, out.decay))


def _dyadic(x: float, bits: int = 24) -> Fraction:
    return min(Fraction(round(x * 2 ** bits), 2 ** bits), Fraction(2 ** bits - 1, 2 ** bits))


def _refined_linear(p: CoreProgram, genu: GenOptions, fix: dict, opts: AnalysisOptions,
                    deadline: Deadline):
    """Refine the nonlinear unknowns of the depth-u system, then solve it exactly."""
    sysu, outu = generate_system(p, None, genu, deadline=deadline)
    tiebreak = _tiebreak(sysu, outu, opts)
    seeded: dict[str, Fraction] = {}
    for v in sysu.vars:
        if v.kind == BLOCK:
            continue
        known = [fix[o] for o in v.origins if o in fix]
        seeded[v.name] = max(known) if known else Fraction(999, 1000)
    lin = _certify(sysu, [seeded], tiebreak, opts, deadline)
    return lin, sysu, outu


def _certify(sys: ConstraintSystem, starts: list[dict], tiebreak, opts: AnalysisOptions,
             deadline: Deadline) -> SolveReport:
    """Search the nonlinear unknowns by linear programming and certify the result exactly."""
    refined = refine_nonlinear(sys, [{k: float(x) for k, x in st.items()} for st in starts],
                               tiebreak=tiebreak, rng_seed=opts.seed, deadline=deadline)
    cands = []
    if refined is not None:
        cands.append({k: _dyadic(x) for k, x in refined.items()})
        # a little more room towards 1 usually loosens every constraint
        for shift in (100, 10):
            cands.append({k: _dyadic(x + (1 - x) / shift) for k, x in refined.items()})
    cands.extend(starts)
    lin = SolveReport(NO_SOLUTION)
    for cand in cands:
        lin = optimize_linear(sys, fixed=cand, tiebreak=tiebreak, deadline=deadline)
        if lin.feasible:
            break
    return lin


def _linear_search(sys0: ConstraintSystem, tiebreak, failed: SolveReport, opts: AnalysisOptions,
                   deadline: Deadline) -> SolveReport:
    """Fallback for the system without unrolling when the penalty search finds nothing."""
    lin = _certify(sys0, [], tiebreak, opts, deadline)
    lin.iterations = failed.iterations
    lin.seconds += failed.seconds
    return lin if lin.feasible else failed


def _concrete(out: SymEgd, sys: ConstraintSystem, values: dict) -> Egd:
    return evaluate_egd(out, sys, values)


# --------------------------------------------------------------------------
# assembly

def _div(a, b):
    if a == 0:
        return Fraction(0)
    if b <= 0 or a == INF:
        return INF
    return Fraction(a) / Fraction(b)


def _interval(lo, hi) -> MassInterval:
    return MassInterval(lo, max(hi, lo))


def _objective_label(p: CoreProgram, opts: AnalysisOptions) -> str:
    if opts.objective == "mass":
        return "mass"
    return f"{opts.objective}({p.var_names[opts.var]})"


def analyze(p: CoreProgram, opts: AnalysisOptions = AnalysisOptions(), program: str = "",
            deadline: Deadline | None = None) -> BoundReport:
    deadline = deadline or Deadline(opts.timeout)
    if not 0 <= opts.var < p.var_count:
        raise ValueError(f"variable index {opts.var} out of range")
    rep = BoundReport(program, opts.mode, opts.unroll, opts.invariant_size, _objective_label(p, opts))
    try:
        unrolled = unroll(p, opts.unroll)
        mu = initial_dist(p)
        lower = lower_semantics(unrolled, mu, cell_cap=opts.cell_cap, deadline=deadline)
    except AnalysisTimeout:
        rep.solver = SolverInfo(TIMEOUT)
        return rep
    residual = mu.total() - lower.total()
    _, res_box = analyze_support(unrolled, SupportBox.point((0,) * p.var_count))
    post_box, _ = analyze_support(p, SupportBox.point((0,) * p.var_count))
    z = normalization_bounds(lower, residual)
    rep.lower, rep.residual = lower, residual

    geo = None
    if opts.mode != "residual":
        try:
            geo = geometric_bound(p, opts, deadline)
        except AnalysisTimeout:
            rep.solver = SolverInfo(TIMEOUT)
        else:
            rep.constraint_system = geo.system
            rep.solver = SolverInfo(geo.report.status, geo.report.iterations, geo.report.seconds)
    egd = geo.egd if geo is not None else None
    rep.geometric = egd
    use_residual = opts.mode != "geometric" or egd is None

    # total mass and normalization
    total_hi = Fraction(1) - lower.failure if use_residual else INF
    if egd is not None:
        total_hi = min(total_hi, egd.total_mass())
    rep.total_mass = _interval(lower.state_mass(), total_hi)
    rep.normalization = _interval(z.lo, min(z.hi, total_hi))
    z_lo, z_hi = rep.normalization.lo, rep.normalization.hi
    has_posterior = z_hi > 0

    for k, name in enumerate(p.var_names):
        marg = lower.marginal(k)
        lo_iv, hi_iv = res_box[k] if not res_box.is_bottom else (INF, -1)
        geo_marg = egd.marginal(k) if egd is not None else None
        masses, normalized = [], []
        for n in range(opts.limit):
            lo = marg.get(n, Fraction(0))
            hi = INF
            if use_residual:
                hi = lo + residual if lo_iv <= n <= hi_iv else lo
            if geo_marg is not None:
                hi = min(hi, geo_marg.mass_at((n,)))
            masses.append(_interval(lo, hi))
            if has_posterior:
                normalized.append(_interval(_div(lo, z_hi), _div(hi, z_lo)))
        moments = []
        for j in range(1, opts.moments + 1):
            lo = finite_moment(lower, k, j)
            hi = INF
            if use_residual and (res_box.is_bottom or res_box[k][1] != INF):
                bound = 0 if res_box.is_bottom else res_box[k][1]
                hi = lo + residual * Fraction(bound) ** j
            if geo_marg is not None:
                hi = min(hi, geo_marg.moment(j))
            if has_posterior:
                moments.append(MomentBound(j, _div(lo, z_hi), max(_div(hi, z_lo), _div(lo, z_hi))))
        tail = None
        if post_box.is_bottom or post_box.bounded(k):
            tail = Fraction(0)
        elif egd is not None:
            tail = egd.tail_decay(k)
        rep.variables.append(VariableBounds(name, masses, normalized if has_posterior else None,
                                            moments, tail))
    return rep


# --------------------------------------------------------------------------
# rendering

def _down(x) -> float:
    f = float(x)
    return math.nextafter(f, -math.inf) if Fraction(f) > x else f


def _up(x) -> float:
    if x == INF:
        return math.inf
    f = float(x)
    return math.nextafter(f, math.inf) if Fraction(f) < x else f


def _num(x: float):
    return "inf" if x == math.inf else x


def _pair(iv: MassInterval) -> tuple[float, float]:
    return _down(iv.lo), _up(iv.hi)


def to_dict(r: BoundReport, timings: bool = False) -> dict:
    def bounds(items):
        out = []
        for n, iv in enumerate(items):
            lo, hi = _pair(iv)
            out.append({"n": n, "lo": lo, "hi": _num(hi)})
        return out

    variables = []
    for v in r.variables:
        variables.append({
            "name": v.name,
            "masses": bounds(v.masses),
            "normalized_masses": bounds(v.normalized_masses) if v.normalized_masses is not None else None,
            "moments": [{"k": m.k, "lo": _down(m.lo), "hi": _num(_up(m.hi))} for m in v.moments],
            "tail_decay": _num(_up(v.tail_decay)) if v.tail_decay is not None else None,
        })

    def interval(iv):
        if iv is None:
            return None
        lo, hi = _pair(iv)
        return {"lo": lo, "hi": _num(hi)}

    return {
        "program": r.program,
        "mode": r.mode,
        "unroll": r.unroll,
        "invariant_size": r.invariant_size,
        "objective": r.objective,
        "variables": variables,
        "normalization": interval(r.normalization),
        "total_mass": interval(r.total_mass),
        "solver": {
            "status": r.solver.status,
            "iterations": r.solver.iterations,
            "seconds": round(r.solver.seconds, 3) if timings and r.solver.seconds is not None else None,
        },
    }


def render_json(r: BoundReport, timings: bool = False) -> str:
    return json.dumps(to_dict(r, timings), indent=2) + "\n"


def render_csv(r: BoundReport, var: int = 0) -> str:
    """Mass bounds of one variable, one ``n,lo,hi`` row per value (normalized when defined)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "lo", "hi"])
    if r.variables:
        v = r.variables[var]
        items = v.normalized_masses if v.normalized_masses is not None else v.masses
        for n, iv in enumerate(items):
            lo, hi = _pair(iv)
            w.writerow([n, repr(lo), _num(hi) if hi == math.inf else repr(hi)])
    return buf.getvalue()


def _fmt(x) -> str:
    if x is None:
        return "-"
    if x == INF or x == math.inf:
        return "inf"
    return f"{float(x):.6g}"


def render_text(r: BoundReport, var: int | None = None, timings: bool = False) -> str:
    lines = [f"program:        {r.program}",
             f"mode:           {r.mode}",
             f"unroll:         {r.unroll}",
             f"invariant size: {r.invariant_size}",
             f"objective:      {r.objective}",
             f"solver status:  {r.solver.status}"]
    if timings and r.solver.seconds is not None:
        lines.append(f"solver time:    {r.solver.seconds:.3f} s")
    if r.normalization is not None:
        lines.append(f"normalization:  [{_fmt(r.normalization.lo)}, {_fmt(r.normalization.hi)}]")
    if r.total_mass is not None:
        lines.append(f"total mass:     [{_fmt(r.total_mass.lo)}, {_fmt(r.total_mass.hi)}]")
    chosen = r.variables if var is None else r.variables[var:var + 1]
    for v in chosen:
        lines.append("")
        lines.append(f"variable {v.name}")
        lines.append(f"  tail decay <= {_fmt(v.tail_decay)}")
        for m in v.moments:
            lines.append(f"  E[{v.name}^{m.k}] in [{_fmt(m.lo)}, {_fmt(m.hi)}]")
        rows = v.normalized_masses if v.normalized_masses is not None else v.masses
        label = "P" if v.normalized_masses is not None else "mass"
        last = max((n for n, iv in enumerate(rows) if iv.hi != 0), default=-1)
        for n, iv in enumerate(rows[:last + 1]):
            lines.append(f"  {label}({v.name}={n}) in [{_fmt(iv.lo)}, {_fmt(iv.hi)}]")
    return "\n".join(lines) + "\n"


def render(r: BoundReport, fmt: str = "text", var: int = 0, timings: bool = False) -> str:
    if fmt == "json":
        return render_json(r, timings)
    if fmt == "csv":
        return render_csv(r, var)
    if fmt == "text":
        return render_text(r, None, timings)
    raise ValueError(f"unknown format {fmt!r}")
