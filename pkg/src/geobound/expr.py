"""Hash-consed expression DAG over rational constants and nonnegative unknowns.

Constants are plain ``int``/``Fraction`` values; everything else is an
:class:`Expr` node.  Nodes are interned in the active :func:`expr_context`, so
structurally equal expressions are the same object and equality is identity.
Construction normalises on the fly:

* ``Sum``     constant + linear combination of non-sum terms,
* ``Prod``    product of factors raised to nonzero integer powers (negative
  powers encode division),
* ``NonnegSub`` difference that is known to be nonnegative but does not
  simplify to a nonnegative combination.

Sums are never distributed over products; the only cancellation performed is
between linear combinations of identical terms, which is exactly what the
complement rule for negated events needs.
"""

from __future__ import annotations

import contextlib
import contextvars
import itertools
import math
from fractions import Fraction
from typing import Callable, Iterable, Union

Number = Union[int, Fraction]

BLOCK = "block"
DECAY = "decay"
CONTRACTION = "contraction"

_uids = itertools.count()


class _Table:
    def __init__(self):
        self.nodes: dict = {}


_current: contextvars.ContextVar[_Table] = contextvars.ContextVar("expr_table", default=_Table())


@contextlib.contextmanager
def expr_context():
    """Run a block with a fresh interning table (keeps generated output reproducible)."""
    token = _current.set(_Table())
    try:
        yield
    finally:
        _current.reset(token)


def _intern(key, build):
    table = _current.get().nodes
    node = table.get(key)
    if node is None:
        node = build()
        node.uid = next(_uids)
        table[key] = node
    return node


def is_num(x) -> bool:
    return isinstance(x, (int, Fraction))


class Expr:
    __slots__ = ("uid", "__weakref__")

    def children(self) -> tuple:
        return ()

    # arithmetic
    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return add(self, scale(o, -1))

    def __rsub__(self, o):
        return add(o, scale(self, -1))

    def __neg__(self):
        return scale(self, -1)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __pow__(self, n: int):
        return power(self, n)

    def __repr__(self):
        return format_expr(self)


class Var(Expr):
    __slots__ = ("name", "kind")

    def __init__(self, name: str, kind: str):
        self.name = name
        self.kind = kind


class Sum(Expr):
    __slots__ = ("const", "terms")

    def __init__(self, const: Fraction, terms: tuple):
        self.const = const
        self.terms = terms  # ((expr, coef), ...) sorted by uid

    def children(self):
        return tuple(t for t, _ in self.terms)


class Prod(Expr):
    __slots__ = ("factors",)

    def __init__(self, factors: tuple):
        self.factors = factors  # ((expr, exponent), ...) sorted by uid

    def children(self):
        return tuple(f for f, _ in self.factors)


class NonnegSub(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a = a
        self.b = b

    def children(self):
        return tuple(x for x in (self.a, self.b) if isinstance(x, Expr))


def var(name: str, kind: str = BLOCK) -> Var:
    node = _intern(("v", name), lambda: Var(name, kind))
    if node.kind != kind:
        raise ValueError(f"variable {name} redeclared with kind {kind}")
    return node


def _key(x):
    return x.uid if isinstance(x, Expr) else ("c", Fraction(x))


# --------------------------------------------------------------------------
# normalising constructors

def _lin(x) -> tuple[Fraction, dict]:
    if is_num(x):
        return Fraction(x), {}
    if isinstance(x, Sum):
        return x.const, dict(x.terms)
    return Fraction(0), {x: Fraction(1)}


def _make_sum(const: Fraction, coefs: dict):
    items = tuple(sorted(((t, c) for t, c in coefs.items() if c != 0), key=lambda tc: tc[0].uid))
    if not items:
        return const
    if const == 0 and len(items) == 1 and items[0][1] == 1:
        return items[0][0]
    key = ("s", const, tuple((t.uid, c) for t, c in items))
    return _intern(key, lambda: Sum(const, items))


def _split(x: Expr) -> tuple[Fraction, Expr]:
    if isinstance(x, Sum) and x.const == 0 and len(x.terms) == 1:
        t, c = x.terms[0]
        return c, t
    return Fraction(1), x


def _factors(core: Expr) -> dict:
    if isinstance(core, Prod):
        return dict(core.factors)
    return {core: 1}


def _make_prod(fs: dict):
    items = tuple(sorted(((f, e) for f, e in fs.items() if e != 0), key=lambda fe: fe[0].uid))
    if not items:
        return Fraction(1)
    if len(items) == 1 and items[0][1] == 1:
        return items[0][0]
    key = ("p", tuple((f.uid, e) for f, e in items))
    return _intern(key, lambda: Prod(items))


def add(x, y):
    if is_num(x) and is_num(y):
        return x + y
    cx, tx = _lin(x)
    cy, ty = _lin(y)
    for t, c in ty.items():
        tx[t] = tx.get(t, 0) + c
    return _make_sum(cx + cy, tx)


def scale(x, c):
    if is_num(x):
        return x * c
    c = Fraction(c)
    if c == 0:
        return Fraction(0)
    if c == 1:
        return x
    k, t = _lin(x)
    return _make_sum(k * c, {e: v * c for e, v in t.items()})


def mul(x, y):
    if is_num(x):
        return scale(y, x)
    if is_num(y):
        return scale(x, y)
    cx, fx = _split(x)
    cy, fy = _split(y)
    fs = _factors(fx)
    for f, e in _factors(fy).items():
        fs[f] = fs.get(f, 0) + e
    return scale(_make_prod(fs), cx * cy)


def power(x, n: int):
    if is_num(x):
        return Fraction(x) ** n
    if n == 0:
        return Fraction(1)
    c, core = _split(x)
    return scale(_make_prod({f: e * n for f, e in _factors(core).items()}), c ** n)


def div(x, y):
    if is_num(y):
        if y == 0:
            raise ZeroDivisionError("division by the constant 0")
        return scale(x, Fraction(1) / Fraction(y))
    return mul(x, power(y, -1))


def nnsub(a, b):
    """``a - b`` for a difference known to be nonnegative."""
    if is_num(a) and is_num(b):
        return a - b
    if is_num(b) and b == 0:
        return a
    ca, ta = _lin(a)
    cb, tb = _lin(b)
    for t, c in tb.items():
        ta[t] = ta.get(t, 0) - c
    const = ca - cb
    if const >= 0 and all(c >= 0 for c in ta.values()):
        return _make_sum(const, ta)
    pos = _make_sum(max(const, 0), {t: c for t, c in ta.items() if c > 0})
    neg = _make_sum(max(-const, 0), {t: -c for t, c in ta.items() if c < 0})
    key = ("n", _key(pos), _key(neg))
    return _intern(key, lambda: NonnegSub(pos, neg))


# --------------------------------------------------------------------------
# traversal and evaluation

def topo(roots: Iterable) -> list[Expr]:
    """All nodes reachable from ``roots``, children before parents."""
    seen: dict[int, Expr] = {}
    stack = [r for r in roots if isinstance(r, Expr)]
    while stack:
        n = stack.pop()
        if n.uid in seen:
            continue
        seen[n.uid] = n
        stack.extend(c for c in n.children() if c.uid not in seen)
    return [seen[k] for k in sorted(seen)]


def free_vars(roots: Iterable) -> list[Var]:
    return [n for n in topo(roots) if isinstance(n, Var)]


def _clamp(d: float, a: float, b: float) -> float:
    # round-off in a mathematically nonnegative difference
    if d < 0 and -d <= 1e-12 * (abs(a) + abs(b)):
        return 0.0
    return d


def evaluate_many(roots: list, env: dict, exact: bool = False) -> list:
    """Evaluate several expressions sharing one memo table.

    ``env`` maps variable names to values.  In exact mode every value is
    converted to a ``Fraction`` first (floats by their exact binary expansion).
    """
    conv: Callable = Fraction if exact else float
    vals: dict[int, object] = {}
    for n in topo(roots):
        if isinstance(n, Var):
            if n.name not in env:
                raise KeyError(f"unbound variable {n.name}")
            v = conv(env[n.name])
        elif isinstance(n, Sum):
            v = conv(n.const)
            for t, c in n.terms:
                v += conv(c) * vals[t.uid]
        elif isinstance(n, Prod):
            v = conv(1)
            for f, e in n.factors:
                fv = vals[f.uid]
                if e < 0 and fv == 0:
                    raise ZeroDivisionError("division by zero in expression")
                v *= fv ** e
        else:
            a = vals[n.a.uid] if isinstance(n.a, Expr) else conv(n.a)
            b = vals[n.b.uid] if isinstance(n.b, Expr) else conv(n.b)
            v = a - b if exact else _clamp(a - b, a, b)
        vals[n.uid] = v
    return [vals[r.uid] if isinstance(r, Expr) else conv(r) for r in roots]


def evaluate(e, env: dict, exact: bool = False):
    return evaluate_many([e], env, exact)[0]


def gradient(e, env: dict) -> tuple[float, dict[str, float]]:
    """Value and reverse-mode gradient (by variable name) in float arithmetic."""
    if not isinstance(e, Expr):
        return float(e), {}
    nodes = topo([e])
    vals: dict[int, float] = {}
    for n in nodes:
        if isinstance(n, Var):
            vals[n.uid] = float(env[n.name])
        elif isinstance(n, Sum):
            vals[n.uid] = float(n.const) + sum(float(c) * vals[t.uid] for t, c in n.terms)
        elif isinstance(n, Prod):
            vals[n.uid] = math.prod(vals[f.uid] ** ex for f, ex in n.factors)
        else:
            a = vals[n.a.uid] if isinstance(n.a, Expr) else float(n.a)
            b = vals[n.b.uid] if isinstance(n.b, Expr) else float(n.b)
            vals[n.uid] = a - b
    adj: dict[int, float] = {n.uid: 0.0 for n in nodes}
    adj[e.uid] = 1.0
    grads: dict[str, float] = {}
    for n in reversed(nodes):
        g = adj[n.uid]
        if g == 0.0:
            continue
        if isinstance(n, Var):
            grads[n.name] = grads.get(n.name, 0.0) + g
        elif isinstance(n, Sum):
            for t, c in n.terms:
                adj[t.uid] += g * float(c)
        elif isinstance(n, Prod):
            fs = n.factors
            for i, (f, ex) in enumerate(fs):
                rest = math.prod(vals[h.uid] ** eh for j, (h, eh) in enumerate(fs) if j != i)
                adj[f.uid] += g * rest * ex * vals[f.uid] ** (ex - 1)
        else:
            if isinstance(n.a, Expr):
                adj[n.a.uid] += g
            if isinstance(n.b, Expr):
                adj[n.b.uid] -= g
    return vals[e.uid], grads


def degree(e, kinds: set[str]) -> float:
    """Polynomial degree in the variables of the given kinds (``inf`` if they occur in a denominator)."""
    if not isinstance(e, Expr):
        return 0
    deg: dict[int, float] = {}
    for n in topo([e]):
        if isinstance(n, Var):
            d = 1 if n.kind in kinds else 0
        elif isinstance(n, Sum):
            d = max(deg[t.uid] for t, _ in n.terms)
        elif isinstance(n, Prod):
            d = 0
            for f, ex in n.factors:
                if deg[f.uid] and ex < 0:
                    d = math.inf
                    break
                d += deg[f.uid] * ex
        else:
            d = max(deg.get(getattr(x, "uid", None), 0) for x in (n.a, n.b))
        deg[n.uid] = d
    return deg[e.uid]


def substitute_many(roots: list, mapping: Callable[[Var], object]) -> list:
    """Rebuild expressions with every variable replaced by ``mapping(var)``."""
    new: dict[int, object] = {}
    for n in topo(roots):
        if isinstance(n, Var):
            r = mapping(n)
        elif isinstance(n, Sum):
            r = n.const
            for t, c in n.terms:
                r = add(r, scale(new[t.uid], c))
        elif isinstance(n, Prod):
            r = Fraction(1)
            for f, ex in n.factors:
                r = mul(r, power(new[f.uid], ex))
        else:
            a = new[n.a.uid] if isinstance(n.a, Expr) else n.a
            b = new[n.b.uid] if isinstance(n.b, Expr) else n.b
            r = nnsub(a, b)
        new[n.uid] = r
    return [new[r.uid] if isinstance(r, Expr) else r for r in roots]


def substitute(e, mapping: Callable[[Var], object]):
    return substitute_many([e], mapping)[0]


# --------------------------------------------------------------------------
# printing

def format_number(c) -> str:
    c = Fraction(c)
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def format_expr(e) -> str:
    if not isinstance(e, Expr):
        return format_number(e)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Sum):
        parts = []
        if e.const != 0:
            parts.append(format_number(e.const))
        for t, c in e.terms:
            body = _atom(t)
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            term = body if mag == 1 else f"{format_number(mag)}*{body}"
            if not parts:
                parts.append(term if sign == "+" else f"-{term}")
            else:
                parts.append(f"{sign} {term}")
        return " ".join(parts)
    if isinstance(e, Prod):
        num = [_atom(f) + (f"^{x}" if x > 1 else "") for f, x in e.factors if x > 0]
        den = [_atom(f) + (f"^{-x}" if x < -1 else "") for f, x in e.factors if x < 0]
        out = "*".join(num) if num else "1"
        if den:
            out += "/" + (den[0] if len(den) == 1 else "(" + "*".join(den) + ")")
        return out
    return f"({format_expr(e.a)} -. {format_expr(e.b)})"


def _atom(e) -> str:
    s = format_expr(e)
    return f"({s})" if isinstance(e, (Sum, NonnegSub)) else s
