"""Eventually geometric distributions (EGDs).

An EGD ``<P, a>`` over ``N^n`` has an initial block ``P`` (an n-dimensional
array) and a decay rate per dimension.  Its mass at index ``i`` is
``P[min(i, |P|-1)] * prod_k a_k ** max(i_k - |P|_k + 1, 0)``: inside the block
it is the block entry, beyond it the last slice is continued geometrically.

The block helpers below are written against Python arithmetic only, so they
work unchanged for ``Fraction`` entries (the concrete :class:`Egd`) and for
symbolic :mod:`geobound.expr` entries (the constraint generator).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np

ZERO = Fraction(0)


def zeros(shape) -> np.ndarray:
    return np.full(tuple(shape), ZERO, dtype=object)


def as_block(values) -> np.ndarray:
    arr = np.array(values, dtype=object)
    return np.vectorize(Fraction, otypes=[object])(arr) if arr.size else arr


# --------------------------------------------------------------------------
# generic block algebra

def entry(block: np.ndarray, decay: Sequence, idx: Sequence[int]):
    """Mass at ``idx`` (the expanded entry), without materialising the expansion."""
    inner = []
    factor = 1
    for i, s, a in zip(idx, block.shape, decay):
        if i < s:
            inner.append(i)
        else:
            inner.append(s - 1)
            factor = factor * a ** (i - s + 1)
    value = block[tuple(inner)]
    return value if factor == 1 else value * factor


def expand_block(block: np.ndarray, decay: Sequence, shape: Sequence[int]) -> np.ndarray:
    for k, (have, want) in enumerate(zip(block.shape, shape)):
        if want < have:
            raise ValueError("expansion cannot shrink a block")
        if want == have:
            continue
        last = block.take([have - 1], axis=k)
        pieces = [block] + [last * (decay[k] ** m) for m in range(1, want - have + 1)]
        block = np.concatenate(pieces, axis=k)
    return block


def le_pairs(p: np.ndarray, alpha: Sequence, q: np.ndarray, beta: Sequence) -> Iterator[tuple]:
    """Entry pairs ``(lhs, rhs)`` whose inequalities define the EGD order on blocks."""
    shape = tuple(map(max, p.shape, q.shape))
    for idx in np.ndindex(*shape):
        yield entry(p, alpha, idx), entry(q, beta, idx)


def marginalize_block(block: np.ndarray, decay: Sequence, k: int):
    """Sum out dimension ``k``; the last slice carries the geometric tail ``1/(1-a_k)``."""
    s = block.shape[k]
    last = block.take(s - 1, axis=k)
    a = decay[k]
    tail = last if (not hasattr(a, "uid") and a == 0) else last / (1 - a)
    if s > 1:
        head = block.take(range(s - 1), axis=k).sum(axis=k)
        out = head + tail
    else:
        out = tail
    return np.asarray(out, dtype=object), tuple(decay[:k]) + tuple(decay[k + 1:])


def total_mass_block(block: np.ndarray, decay: Sequence):
    while block.ndim > 0:
        block, decay = marginalize_block(block, decay, block.ndim - 1)
    return block.item()


def marginal_block(block: np.ndarray, decay: Sequence, keep: int):
    """One-dimensional marginal in dimension ``keep``."""
    for k in reversed(range(block.ndim)):
        if k != keep:
            block, decay = marginalize_block(block, decay, k)
    return block, decay


@lru_cache(maxsize=None)
def eulerian(n: int, m: int) -> int:
    return sum((-1) ** j * math.comb(n + 1, j) * (m + 1 - j) ** n for j in range(m + 1))


def geometric_moment(alpha, i: int):
    """``E[Y^i]`` for ``Y`` geometric on ``{0,1,...}`` with ``P(Y=m) = (1-a) a^m``.

    Uses ``sum_m m^i a^m = a * A_i(a) / (1-a)^(i+1)`` with the Eulerian
    polynomial ``A_i``.
    """
    if i == 0:
        return Fraction(1)
    if not hasattr(alpha, "uid") and alpha == 0:
        return Fraction(0)
    poly = sum((eulerian(i, m) * alpha ** m for m in range(i)), Fraction(0))
    return alpha * poly / (1 - alpha) ** i


def moment_1d(block: np.ndarray, alpha, k: int):
    """``sum_j j^k g(j)`` for a one-dimensional EGD."""
    d = block.shape[0] - 1
    head = sum((block[j] * j ** k for j in range(d)), Fraction(0))
    tail_sum = sum((math.comb(k, i) * d ** (k - i) * geometric_moment(alpha, i)
                    for i in range(k + 1)), Fraction(0))
    last = block[d]
    scale = last if (not hasattr(alpha, "uid") and alpha == 0) else last / (1 - alpha)
    return head + scale * tail_sum


def join_blocks(r: np.ndarray, gamma: Sequence, s: np.ndarray, delta: Sequence,
                decay_join: Callable) -> tuple[np.ndarray, tuple]:
    shape = tuple(map(max, r.shape, s.shape))
    beta = tuple(decay_join(g, d) for g, d in zip(gamma, delta))
    return expand_block(r, gamma, shape) + expand_block(s, delta, shape), beta


# --------------------------------------------------------------------------
# concrete EGDs

@dataclass(frozen=True, eq=False)
class Egd:
    block: np.ndarray
    decay: tuple[Fraction, ...]

    def __post_init__(self):
        if self.block.ndim != len(self.decay):
            raise ValueError("block dimension and decay vector disagree")
        if any(not 0 <= a < 1 for a in self.decay):
            raise ValueError("decay rates must lie in [0, 1)")

    @staticmethod
    def dirac(n: int) -> "Egd":
        block = zeros((1,) * n)
        block[(0,) * n] = Fraction(1)
        return Egd(block, (ZERO,) * n)

    @staticmethod
    def zero(n: int) -> "Egd":
        return Egd(zeros((1,) * n), (ZERO,) * n)

    @staticmethod
    def of(values, decay) -> "Egd":
        return Egd(as_block(values), tuple(Fraction(a) for a in decay))

    @property
    def dims(self) -> int:
        return self.block.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.block.shape

    def mass_at(self, idx: Sequence[int]) -> Fraction:
        return entry(self.block, self.decay, idx)

    def expand(self, shape: Sequence[int]) -> "Egd":
        return Egd(expand_block(self.block, self.decay, shape), self.decay)

    def le(self, other: "Egd") -> bool:
        """The (sufficient) EGD order: decays and all expanded entries compare."""
        if any(a > b for a, b in zip(self.decay, other.decay)):
            return False
        return all(l <= r for l, r in le_pairs(self.block, self.decay, other.block, other.decay))

    def marginalize(self, k: int) -> "Egd | Fraction":
        block, decay = marginalize_block(self.block, self.decay, k)
        return block.item() if block.ndim == 0 else Egd(block, decay)

    def marginal(self, k: int) -> "Egd":
        return Egd(*marginal_block(self.block, self.decay, k))

    def moment(self, k: int) -> Fraction:
        if self.dims != 1:
            raise ValueError("moments are defined for one-dimensional EGDs; marginalize first")
        return Fraction(moment_1d(self.block, self.decay[0], k))

    def total_mass(self) -> Fraction:
        return Fraction(total_mass_block(self.block, self.decay))

    def join(self, other: "Egd", decay: Sequence[Fraction] | None = None) -> "Egd":
        """Join with the strict (maximal) decays, or with supplied larger ones."""
        if decay is None:
            block, beta = join_blocks(self.block, self.decay, other.block, other.decay, max)
        else:
            if any(b < max(g, d) for b, g, d in zip(decay, self.decay, other.decay)):
                raise ValueError("join decay must dominate both decays")
            shape = tuple(map(max, self.shape, other.shape))
            block = expand_block(self.block, self.decay, shape) + \
                expand_block(other.block, other.decay, shape)
            beta = tuple(Fraction(b) for b in decay)
        return Egd(block, beta)

    def scaled(self, r: Fraction) -> "Egd":
        return Egd(self.block * Fraction(r), self.decay)

    def tail_decay(self, k: int) -> Fraction:
        """Decay of the marginal in dimension ``k``; zero when that marginal has finite support."""
        g = self.marginal(k)
        return g.decay[0] if g.block[-1] != 0 else ZERO
