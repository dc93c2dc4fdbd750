"""Solving the generated constraint systems.

Three stages, each usable on its own:

* :func:`penalty_solve` searches for a feasible point of the full (nonlinear)
  system with ADAM on the objective plus exponential penalties
  ``exp(lam * f(x) / |grad f(x)|)`` for every constraint ``f(x) <= 0``, where
  ``lam`` is the iteration number.
* :func:`optimize_linear` minimises the objective of a system that is affine
  in the block unknowns (all other unknowns fixed) with an exact rational
  simplex.
* :func:`verify_exact` is the gatekeeper: nothing is reported feasible unless
  every constraint holds in exact rational arithmetic.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Protocol

import numpy as np
from scipy.optimize import linprog, minimize

from . import expr as ex
from .expr import BLOCK, Expr, Prod, Sum, Var
from .limits import NO_DEADLINE, AnalysisTimeout, Deadline
from .symgeo import Constraint, ConstraintSystem

FEASIBLE = "feasible"
NO_SOLUTION = "no-solution-found"
INFEASIBLE_DOMAIN = "infeasible-by-domain"
TIMEOUT = "timeout"

DOMAIN_CAP = 1 - 1e-9  # closed surrogate for the open interval [0, 1)


@dataclass
class SolveReport:
    status: str
    assignment: dict[str, Fraction] | None = None
    objective: Fraction | None = None
    iterations: int = 0
    seconds: float = 0.0
    violations: list[Constraint] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE

    def floats(self) -> dict[str, float]:
        return {k: float(v) for k, v in (self.assignment or {}).items()}


class Solver(Protocol):
    """Anything that turns a constraint system into a :class:`SolveReport`."""

    def solve(self, sys: ConstraintSystem) -> SolveReport: ...


# --------------------------------------------------------------------------
# exact verification

def verify_exact(sys: ConstraintSystem, values: dict, margin: Fraction = Fraction(0)
                 ) -> tuple[bool, list[Constraint]]:
    """Check domains and all constraints exactly; return ``(ok, violated constraints)``.

    Float values are converted by their exact binary expansion.  With a
    positive ``margin`` each constraint must hold with that much slack.
    """
    exact = {k: Fraction(v) for k, v in values.items()}
    bad = []
    for v in sys.vars:
        x = exact.get(v.name)
        if x is None:
            raise KeyError(f"assignment has no value for {v.name}")
        if x < 0:
            bad.append(Constraint(0, ex.var(v.name, v.kind)))
        elif v.kind != BLOCK and x >= 1:
            bad.append(Constraint(ex.var(v.name, v.kind), 1, strict=True))
    env = sys.full_env(exact)
    roots = [x for c in sys.constraints for x in (c.lhs, c.rhs)]
    vals = ex.evaluate_many(roots, env, exact=True)
    for i, c in enumerate(sys.constraints):
        lhs, rhs = vals[2 * i], vals[2 * i + 1]
        if lhs + margin > rhs or (c.strict and lhs == rhs):
            bad.append(c)
    return not bad, bad


def objective_value(sys: ConstraintSystem, values: dict) -> Fraction | None:
    if sys.objective is None:
        return None
    env = sys.full_env({k: Fraction(v) for k, v in values.items()})
    return Fraction(ex.evaluate(sys.objective, env, exact=True))


# --------------------------------------------------------------------------
# compiled float evaluation with reverse-mode Jacobians

class CompiledSystem:
    """Straight-line Python code for the values and gradients of a list of roots."""

    def __init__(self, roots: list, names: list[str]):
        self.names = names
        self.index = {n: i for i, n in enumerate(names)}
        self.n_roots = len(roots)
        nodes = ex.topo(roots)
        fwd = []
        for n in nodes:
            fwd.append(f"    t{n.uid} = {self._forward(n)}")
        outs = ", ".join(self._ref(r) for r in roots)
        src_values = ["def values(x):"] + fwd + [f"    return [{outs}]"]

        src_jac = ["def jacobian(x, J):"] + fwd
        for i, r in enumerate(roots):
            src_jac.extend(self._backward(i, r))
        src_jac.append(f"    return [{outs}]")
        ns = {}
        exec(compile("\n".join(src_values) + "\n\n" + "\n".join(src_jac) + "\n",
                     "<constraint-system>", "exec"), ns)
        self._values = ns["values"]
        self._jacobian = ns["jacobian"]

    @staticmethod
    def _ref(x) -> str:
        return f"t{x.uid}" if isinstance(x, Expr) else repr(float(x))

    def _forward(self, n) -> str:
        if isinstance(n, Var):
            return f"x[{self.index[n.name]}]"
        if isinstance(n, Sum):
            parts = [repr(float(n.const))] if n.const else []
            parts += [f"{float(c)!r}*t{t.uid}" for t, c in n.terms]
            return " + ".join(parts)
        if isinstance(n, Prod):
            return " * ".join(f"t{f.uid}" if e == 1 else f"t{f.uid}**{e}" for f, e in n.factors)
        return f"{self._ref(n.a)} - {self._ref(n.b)}"

    def _backward(self, row: int, root) -> list[str]:
        if not isinstance(root, Expr):
            return []
        cone = ex.topo([root])
        lines = [f"    g{n.uid} = 0.0" for n in cone]
        lines.append(f"    g{root.uid} = 1.0")
        for n in reversed(cone):
            g = f"g{n.uid}"
            if isinstance(n, Var):
                lines.append(f"    J[{row}, {self.index[n.name]}] = {g}")
            elif isinstance(n, Sum):
                for t, c in n.terms:
                    lines.append(f"    g{t.uid} += {float(c)!r}*{g}")
            elif isinstance(n, Prod):
                fs = n.factors
                for i, (f, e) in enumerate(fs):
                    rest = [f"t{h.uid}" if eh == 1 else f"t{h.uid}**{eh}"
                            for j, (h, eh) in enumerate(fs) if j != i]
                    own = "1.0" if e == 1 else f"{e}*t{f.uid}**{e - 1}"
                    lines.append(f"    g{f.uid} += {g}*{own}" + "".join(f"*{r}" for r in rest))
            else:
                if isinstance(n.a, Expr):
                    lines.append(f"    g{n.a.uid} += {g}")
                if isinstance(n.b, Expr):
                    lines.append(f"    g{n.b.uid} -= {g}")
        return lines

    def values(self, x) -> list[float]:
        return self._values(x)

    def jacobian(self, x) -> tuple[list[float], np.ndarray]:
        J = np.zeros((self.n_roots, len(self.names)))
        vals = self._jacobian(x, J)
        return vals, J


def penalty_terms(f: np.ndarray, norms: np.ndarray, lam: float,
                  cap: float = math.inf) -> tuple[np.ndarray, np.ndarray]:
    """Penalties ``exp(lam * f / |grad f|)`` and their derivatives with respect to ``f``.

    The exponent is capped at ``cap`` to keep far-infeasible starts finite; the
    gradient norm is treated as a constant.
    """
    z = np.minimum(lam * f / norms, cap)
    terms = np.exp(z)
    return terms, terms * lam / norms


def _difference(c: Constraint):
    return ex.add(c.lhs, ex.scale(c.rhs, -1))


# --------------------------------------------------------------------------
# penalty search

@dataclass
class PenaltySolver:
    """ADAM on ``log(objective) + sum exp(lam * dist)`` with exact certification.

    The objective enters through its logarithm (same minimisers, far better
    scaled near decay rates close to 1).  Candidates that satisfy every
    constraint with the current margin in floating point are certified
    exactly; if none survives, the margin is multiplied by ``margin_growth``
    and the search is repeated, up to ``retries`` times.
    """

    lr: float = 0.05
    betas: tuple[float, float] = (0.9, 0.999)
    iterations: int = 5000
    margin: float = 1e-6
    margin_growth: float = 100.0
    retries: int = 3
    restarts: int = 1
    rng_seed: int = 0
    exponent_cap: float = 30.0
    final_lr_ratio: float = 0.01
    deadline: Deadline = NO_DEADLINE

    def solve(self, sys: ConstraintSystem, seed: dict | None = None) -> SolveReport:
        start = time.perf_counter()
        if sys.constant_violations():
            return SolveReport(INFEASIBLE_DOMAIN, violations=sys.constant_violations(),
                               seconds=time.perf_counter() - start)
        names = sys.names()
        kinds = [sys.var_info(n).kind for n in names]
        upper = np.array([math.inf if k == BLOCK else DOMAIN_CAP for k in kinds])
        diffs = [_difference(c) for c in sys.constraints]
        obj = sys.objective
        comp = CompiledSystem(diffs + [obj if obj is not None else 0], names)
        rhs_comp = CompiledSystem([c.rhs for c in sys.constraints], names)

        x0 = np.array([1.0 if k == BLOCK else 0.999 for k in kinds])
        if seed:
            for i, n in enumerate(names):
                if n in seed:
                    x0[i] = min(float(seed[n]), upper[i])
        rng = np.random.default_rng(self.rng_seed)
        starts = [x0]
        for _ in range(self.restarts):
            starts.append(np.where(upper == math.inf, rng.uniform(0.5, 2.0, len(names)),
                                   rng.uniform(0.5, DOMAIN_CAP, len(names))))

        total_iters = 0
        try:
            for x_init in starts:
                scale = np.maximum(1.0, np.abs(np.array(rhs_comp.values(list(x_init)), dtype=float)))
                margin = self.margin
                for _ in range(self.retries + 1):
                    cands, iters = self._search(comp, len(diffs), x_init, upper, margin * scale,
                                                isinstance(obj, Expr))
                    total_iters += iters
                    if not cands:
                        break  # not even float-feasible: a larger margin cannot help
                    for x in reversed(cands):
                        values = {n: Fraction(float(v)) for n, v in zip(names, x)}
                        ok, _ = verify_exact(sys, values)
                        if ok:
                            return SolveReport(FEASIBLE, values, objective_value(sys, values),
                                               total_iters, time.perf_counter() - start)
                    margin *= self.margin_growth
        except AnalysisTimeout:
            return SolveReport(TIMEOUT, iterations=total_iters, seconds=time.perf_counter() - start)
        return SolveReport(NO_SOLUTION, iterations=total_iters, seconds=time.perf_counter() - start)

    def _search(self, comp: CompiledSystem, nc: int, x0: np.ndarray, upper: np.ndarray,
                slack: np.ndarray, has_objective: bool) -> tuple[list[np.ndarray], int]:
        """Run ADAM; return the improving float-feasible candidates (best last)."""
        b1, b2 = self.betas
        x = x0.copy()
        m = np.zeros_like(x)
        v = np.zeros_like(x)
        cands: list[np.ndarray] = []
        best = math.inf
        it = 0
        for it in range(1, self.iterations + 1):
            if it % 64 == 0:
                self.deadline.check()
            try:
                vals, J = comp.jacobian(list(x))
            except (ZeroDivisionError, OverflowError):
                break
            f = np.array(vals[:nc], dtype=float) + slack
            objv = float(vals[nc])
            if not np.all(np.isfinite(f)) or not math.isfinite(objv):
                break
            if np.all(f <= 0) and objv < best:
                best = objv
                cands.append(x.copy())
                if not has_objective:
                    break
            grad = np.zeros_like(x)
            if has_objective and objv > 0:
                grad += J[nc] / objv
            if nc:
                norms = np.maximum(np.linalg.norm(J[:nc], axis=1), 1e-12)
                _, w = penalty_terms(f, norms, it, self.exponent_cap)
                grad += w @ J[:nc]
            m = b1 * m + (1 - b1) * grad
            v = b2 * v + (1 - b2) * grad * grad
            mhat = m / (1 - b1 ** it)
            vhat = v / (1 - b2 ** it)
            lr = self.lr * self.final_lr_ratio ** (it / self.iterations)
            step = lr * mhat / (np.sqrt(vhat) + 1e-12)
            x = np.clip(x - step * np.where(upper == math.inf, np.maximum(x, 1.0), 1.0), 0.0, upper)
        return cands, it


def penalty_solve(sys: ConstraintSystem, seed: dict | None = None, **options) -> SolveReport:
    return PenaltySolver(**options).solve(sys, seed)


# --------------------------------------------------------------------------
# refinement of the nonlinear unknowns

def _float_lp_value(comp: CompiledSystem, x: np.ndarray, nc: int, nl_idx, bl_idx) -> float:
    """Optimal objective over the block unknowns, in floating point; ``inf`` if infeasible."""
    vals, J = comp.jacobian(list(x))
    const = np.array(vals[:nc], dtype=float)
    A = J[:nc][:, bl_idx]
    cost = J[nc, bl_idx]
    base = float(vals[nc])
    if not (np.all(np.isfinite(const)) and np.all(np.isfinite(A)) and math.isfinite(base)):
        return math.inf
    if not np.any(cost):
        cost = J[nc + 1, bl_idx]  # objective does not involve the blocks: use the tiebreak
        base_only = True
    else:
        base_only = False
    if not len(bl_idx):
        return base if np.all(const <= 1e-9) else math.inf
    # scale rows so the solver's absolute feasibility tolerance acts relatively
    norms = np.maximum(np.max(np.abs(A), axis=1, initial=0.0), np.abs(const))
    norms[norms == 0] = 1.0
    res = linprog(cost, A_ub=A / norms[:, None], b_ub=-const / norms, bounds=(0, None),
                  method="highs")
    if res.status != 0:
        return math.inf
    return base if base_only else base + float(cost @ res.x)


def _logit(t: float) -> float:
    t = min(max(t, 1e-6), DOMAIN_CAP)
    return math.log(t / (1 - t))


def _sigmoid(s: np.ndarray) -> np.ndarray:
    return np.clip(1.0 / (1.0 + np.exp(-np.clip(s, -40.0, 40.0))), 0.0, DOMAIN_CAP)


GENERIC_STARTS = (0.5, 0.8, 0.9, 0.95, 0.99, 0.999)


def refine_nonlinear(sys: ConstraintSystem, starts: list[dict], tiebreak=None,
                     max_evals: int = 400, random_starts: int = 16, rng_seed: int = 0,
                     deadline: Deadline = NO_DEADLINE) -> dict[str, float] | None:
    """Search decay rates and contraction factors of a system affine in the blocks.

    Each candidate is scored by the optimal value of the linear program in the
    block unknowns.  The given ``starts``, a few constant and seeded random
    points are scored first; Nelder-Mead then runs from the best one in logit
    coordinates, which resolve values close to 1 well.  Returns the best values
    found, or None when no start has a feasible linear program.  The result
    still has to be certified, e.g. by :func:`optimize_linear`.
    """
    names = sys.names()
    nl = [n for n in names if sys.var_info(n).kind != BLOCK]
    if not nl:
        return {}
    nl_idx = [names.index(n) for n in nl]
    bl_idx = [i for i, n in enumerate(names) if sys.var_info(n).kind == BLOCK]
    diffs = [_difference(c) for c in sys.constraints]
    obj = sys.objective if sys.objective is not None else 0
    comp = CompiledSystem(diffs + [obj, tiebreak if tiebreak is not None else 0], names)
    nc = len(diffs)
    x = np.zeros(len(names))

    def score(s: np.ndarray) -> float:
        deadline.check()
        x[nl_idx] = _sigmoid(s)
        try:
            v = _float_lp_value(comp, x, nc, nl_idx, bl_idx)
        except (ZeroDivisionError, OverflowError, ValueError):
            return math.inf
        return math.log(max(v, 1e-300)) if math.isfinite(v) else math.inf

    k = len(nl)
    points = [np.array([_logit(float(st[n])) for n in nl]) for st in starts]
    points += [np.full(k, _logit(t)) for t in GENERIC_STARTS]
    rng = np.random.default_rng(rng_seed)
    for _ in range(random_starts):
        points.append(np.array([_logit(1 - 10 ** -rng.uniform(0.3, 3.0)) for _ in range(k)]))
    scored = [(score(pt), i) for i, pt in enumerate(points)]
    best_val, best_i = min(scored)
    if not math.isfinite(best_val):
        return None
    s0 = points[best_i]
    simplex0 = [s0] + [s0 + 0.5 * np.eye(k)[i] * (-1 if s0[i] > 0 else 1) for i in range(k)]
    res = minimize(score, s0, method="Nelder-Mead",
                   options={"maxfev": max_evals, "xatol": 1e-6, "fatol": 1e-9,
                            "initial_simplex": np.array(simplex0)})
    s = res.x if res.fun < best_val else s0
    return {n: float(v) for n, v in zip(nl, _sigmoid(s))}


# --------------------------------------------------------------------------
# linear stage

class NotLinearError(ValueError):
    pass


def affine_forms(roots: list, fixed: dict) -> list[tuple[Fraction, dict[str, Fraction]]]:
    """Exact affine forms ``const + sum coef * var`` over the block unknowns.

    Every other unknown must be given a value in ``fixed``.
    """
    forms: dict[int, tuple[Fraction, dict]] = {}

    def form(x):
        return forms[x.uid] if isinstance(x, Expr) else (Fraction(x), {})

    for n in ex.topo(roots):
        if isinstance(n, Var):
            if n.kind == BLOCK and n.name not in fixed:
                f = (Fraction(0), {n.name: Fraction(1)})
            else:
                f = (Fraction(fixed[n.name]), {})
        elif isinstance(n, Sum):
            const, lin = Fraction(n.const), {}
            for t, c in n.terms:
                k, tl = forms[t.uid]
                const += c * k
                for name, a in tl.items():
                    lin[name] = lin.get(name, 0) + c * a
            f = (const, lin)
        elif isinstance(n, Prod):
            const, lin = Fraction(1), None
            for fac, e in n.factors:
                k, fl = forms[fac.uid]
                if fl:
                    if e != 1 or lin is not None:
                        raise NotLinearError("system is not affine in the block unknowns")
                    lin = dict(fl)
                    lin_const = k
                else:
                    if k == 0 and e < 0:
                        raise ZeroDivisionError("division by zero in expression")
                    const *= k ** e
            if lin is None:
                f = (const, {})
            else:
                f = (const * lin_const, {name: const * a for name, a in lin.items()})
        else:
            ka, la = form(n.a)
            kb, lb = form(n.b)
            lin = dict(la)
            for name, a in lb.items():
                lin[name] = lin.get(name, 0) - a
            f = (ka - kb, lin)
        forms[n.uid] = (f[0], {k: v for k, v in f[1].items() if v != 0})
    return [form(r) for r in roots]


def simplex(c: list[Fraction], A: list[list[Fraction]], b: list[Fraction]):
    """Minimise ``c.x`` subject to ``A x <= b``, ``x >= 0`` in exact arithmetic.

    Two-phase dense-tableau simplex with Bland's rule.  Returns ``("optimal", x)``,
    ``("infeasible", None)`` or ``("unbounded", None)``.
    """
    m, n = len(A), len(c)
    # rows with negative right-hand side are negated and get an artificial variable
    rows, basis, n_art = [], [], 0
    art_rows = [i for i in range(m) if b[i] < 0]
    width = n + m + len(art_rows) + 1
    art_col = {}
    for i in range(m):
        row = [Fraction(0)] * width
        sign = -1 if b[i] < 0 else 1
        for j in range(n):
            row[j] = sign * A[i][j]
        row[n + i] = Fraction(sign)
        row[-1] = sign * b[i]
        if sign < 0:
            col = n + m + n_art
            art_col[i] = col
            row[col] = Fraction(1)
            n_art += 1
            basis.append(col)
        else:
            basis.append(n + i)
        rows.append(row)

    def pivot(r: int, col: int):
        pr = rows[r]
        pv = pr[col]
        if pv != 1:
            rows[r] = pr = [x / pv for x in pr]
        for i, row in enumerate(rows):
            if i != r and row[col] != 0:
                k = row[col]
                rows[i] = [x - k * y for x, y in zip(row, pr)]
        basis[r] = col

    def run(cost: list[Fraction], allowed: int) -> str:
        while True:
            # reduced costs
            z = [Fraction(0)] * allowed
            for i, bi in enumerate(basis):
                cb = cost[bi]
                if cb:
                    row = rows[i]
                    for j in range(allowed):
                        if row[j]:
                            z[j] += cb * row[j]
            enter = next((j for j in range(allowed) if cost[j] - z[j] < 0 and j not in basis), None)
            if enter is None:
                return "optimal"
            best, leave = None, None
            for i, row in enumerate(rows):
                if row[enter] > 0:
                    ratio = row[-1] / row[enter]
                    if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                        best, leave = ratio, i
            if leave is None:
                return "unbounded"
            pivot(leave, enter)

    if n_art:
        cost1 = [Fraction(0)] * (width - 1)
        for col in art_col.values():
            cost1[col] = Fraction(1)
        run(cost1, width - 1)
        if any(basis[i] >= n + m and rows[i][-1] != 0 for i in range(m)):
            return "infeasible", None
        # drive remaining (zero-valued) artificials out of the basis
        for i in range(m):
            if basis[i] >= n + m:
                col = next((j for j in range(n + m) if rows[i][j] != 0), None)
                if col is not None:
                    pivot(i, col)
    cost2 = [Fraction(x) for x in c] + [Fraction(0)] * (width - 1 - n)
    status = run(cost2, n + m)
    if status != "optimal":
        return status, None
    x = [Fraction(0)] * n
    for i, bi in enumerate(basis):
        if bi < n:
            x[bi] = rows[i][-1]
    return "optimal", x


def optimize_linear(sys: ConstraintSystem, fixed: dict | None = None,
                    tiebreak=None, deadline: Deadline = NO_DEADLINE) -> SolveReport:
    """Minimise the objective over the free block unknowns with every other unknown fixed.

    ``tiebreak`` is an optional expression minimised when the objective does
    not depend on the free unknowns (e.g. a decay-rate objective).
    """
    start = time.perf_counter()
    fixed = {k: Fraction(v) for k, v in (fixed or {}).items()}
    free = [v.name for v in sys.vars if v.kind == BLOCK and v.name not in fixed]
    missing = [v.name for v in sys.vars if v.kind != BLOCK and v.name not in fixed]
    if missing:
        raise ValueError(f"nonlinear unknowns must be fixed: {', '.join(missing)}")
    if sys.constant_violations():
        return SolveReport(INFEASIBLE_DOMAIN, violations=sys.constant_violations())
    objective = sys.objective if sys.objective is not None else 0
    roots = [_difference(c) for c in sys.constraints] + [objective, tiebreak if tiebreak is not None else 0]
    forms = affine_forms(roots, fixed)
    deadline.check()
    obj_form, tie_form = forms[-2], forms[-1]
    cost_form = obj_form if obj_form[1] else tie_form

    # presolve: single-variable constraints become bounds
    lower = {name: Fraction(0) for name in free}
    upper: dict[str, Fraction] = {}
    rows: dict[tuple, Fraction] = {}
    for (const, lin), c in zip(forms[:-2], sys.constraints):
        # const + sum a x <= 0
        if not lin:
            if const > 0 or (c.strict and const == 0):
                return SolveReport(NO_SOLUTION, violations=[c], seconds=time.perf_counter() - start)
            continue
        if len(lin) == 1:
            (name, a), = lin.items()
            bound = -const / a
            if a > 0:
                upper[name] = min(upper.get(name, bound), bound)
            else:
                lower[name] = max(lower[name], bound)
            continue
        key = tuple(sorted(lin.items()))
        rows[key] = min(rows.get(key, -const), -const)
    if any(upper[n] < lower[n] for n in upper):
        return SolveReport(NO_SOLUTION, seconds=time.perf_counter() - start)

    index = {name: j for j, name in enumerate(free)}
    A, b = [], []
    for key, rhs in rows.items():
        row = [Fraction(0)] * len(free)
        shift = Fraction(0)
        for name, a in key:
            row[index[name]] = a
            shift += a * lower[name]
        A.append(row)
        b.append(rhs - shift)
    for name, ub in upper.items():
        row = [Fraction(0)] * len(free)
        row[index[name]] = Fraction(1)
        A.append(row)
        b.append(ub - lower[name])
    cost = [cost_form[1].get(name, Fraction(0)) for name in free]
    status, y = simplex(cost, A, b) if A else ("optimal", [
        Fraction(0) if cj >= 0 else None for cj in cost])
    if status == "optimal" and y is not None and any(v is None for v in y):
        status = "unbounded"
    if status != "optimal":
        return SolveReport(NO_SOLUTION, seconds=time.perf_counter() - start)
    values = dict(fixed)
    for name, yj in zip(free, y):
        values[name] = lower[name] + yj
    values = {v.name: values[v.name] for v in sys.vars}
    ok, bad = verify_exact(sys, values)
    if not ok:
        return SolveReport(NO_SOLUTION, violations=bad, seconds=time.perf_counter() - start)
    return SolveReport(FEASIBLE, values, objective_value(sys, values), 0,
                       time.perf_counter() - start)


# --------------------------------------------------------------------------
# SMT-LIB export

def _smt_number(c) -> str:
    c = Fraction(c)
    num = f"{abs(c.numerator)}.0" if c.denominator == 1 else \
        f"(/ {abs(c.numerator)}.0 {c.denominator}.0)"
    return f"(- {num})" if c < 0 else num


def _smt_expr(e, names: dict[int, str]) -> str:
    return names[e.uid] if isinstance(e, Expr) else _smt_number(e)


def to_smtlib(sys: ConstraintSystem) -> str:
    """The system as an SMT-LIB 2 script over nonlinear real arithmetic."""
    out = ["(set-logic QF_NRA)"]
    for v in sys.vars:
        out.append(f"(declare-fun {v.name} () Real)")
        out.append(f"(assert (>= {v.name} 0.0))")
        if v.kind != BLOCK:
            out.append(f"(assert (< {v.name} 1.0))")
    roots = [x for c in sys.constraints for x in (c.lhs, c.rhs)]
    if sys.objective is not None:
        roots.append(sys.objective)
    names: dict[int, str] = {}
    defs = []
    for n in ex.topo(roots):
        if isinstance(n, Var):
            names[n.uid] = sys.resolve(n.name)
            continue
        if isinstance(n, Sum):
            parts = [_smt_number(n.const)] if n.const else []
            parts += [names[t.uid] if c == 1 else f"(* {_smt_number(c)} {names[t.uid]})"
                      for t, c in n.terms]
            body = parts[0] if len(parts) == 1 else f"(+ {' '.join(parts)})"
        elif isinstance(n, Prod):
            num = [names[f.uid] for f, e in n.factors for _ in range(max(e, 0))]
            den = [names[f.uid] for f, e in n.factors for _ in range(max(-e, 0))]
            top = num[0] if len(num) == 1 else (f"(* {' '.join(num)})" if num else "1.0")
            if den:
                bottom = den[0] if len(den) == 1 else f"(* {' '.join(den)})"
                body = f"(/ {top} {bottom})"
            else:
                body = top
        else:
            body = f"(- {_smt_expr(n.a, names)} {_smt_expr(n.b, names)})"
        name = f"e{len(defs)}"
        names[n.uid] = name
        defs.append(f"(define-fun {name} () Real {body})")
    out.extend(defs)
    for c in sys.constraints:
        rel = "<" if c.strict else "<="
        out.append(f"(assert ({rel} {_smt_expr(c.lhs, names)} {_smt_expr(c.rhs, names)}))")
    if sys.objective is not None:
        out.append(f"; objective to minimise: {_smt_expr(sys.objective, names)}")
    out.append("(check-sat)")
    out.append("(get-model)")
    return "\n".join(out) + "\n"
