"""Sparse polynomials in ``(x, conj(x), y, conj(y))`` and their real images.

Complex polynomials live in ``C[x, x̄, y, ȳ]`` with ``x, y`` in ``C^n``.
Substituting ``x = a + i b`` and ``y = c + i d`` turns a Hermitian polynomial
into a real polynomial in ``4n`` variables ordered ``(a_1..a_n, b_1..b_n,
c_1..c_n, d_1..d_n)``; :func:`realify` performs that expansion.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import DimensionMismatch, NotHermitianPolynomial

PRUNE_TOL = 1e-15


class CostConvention(enum.Enum):
    """Which quartic cost is minimized over the bi-sphere.

    ``PAPER_CONJUGATE`` is ``Tr[(xx* - yy*) conj(xx* - yy*)]``, i.e.
    ``|Σx_i²|² + |Σy_i²|² - 2|Σx_i y_i|²``. ``PROJECTOR_FROBENIUS`` is the
    squared Frobenius distance ``||xx* - yy*||_F²`` of the two projectors.
    Both coincide at real points.
    """

    PAPER_CONJUGATE = "paper"
    PROJECTOR_FROBENIUS = "frobenius"

    @classmethod
    def parse(cls, value) -> "CostConvention":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True, order=True)
class ComplexMonomial:
    """``x^alpha conj(x)^beta y^gamma conj(y)^delta``."""

    alpha: tuple
    beta: tuple
    gamma: tuple
    delta: tuple

    @property
    def n(self) -> int:
        return len(self.alpha)

    @property
    def degree(self) -> int:
        return sum(self.alpha) + sum(self.beta) + sum(self.gamma) + sum(self.delta)

    def conjugate(self) -> "ComplexMonomial":
        return ComplexMonomial(self.beta, self.alpha, self.delta, self.gamma)

    def __mul__(self, other: "ComplexMonomial") -> "ComplexMonomial":
        add = lambda p, q: tuple(i + j for i, j in zip(p, q))  # noqa: E731
        return ComplexMonomial(
            add(self.alpha, other.alpha),
            add(self.beta, other.beta),
            add(self.gamma, other.gamma),
            add(self.delta, other.delta),
        )

    @classmethod
    def one(cls, n: int) -> "ComplexMonomial":
        z = (0,) * n
        return cls(z, z, z, z)


def _unit(n: int, i: int) -> tuple:
    return tuple(1 if k == i else 0 for k in range(n))


def _prune(terms: dict, tol: float = PRUNE_TOL) -> dict:
    return {m: c for m, c in terms.items() if abs(c) >= tol}


class ComplexPolynomial:
    """Sparse map from :class:`ComplexMonomial` to complex coefficients."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: dict | None = None):
        self.n = n
        self.terms = _prune({m: complex(c) for m, c in (terms or {}).items()})
        for m in self.terms:
            if m.n != n:
                raise DimensionMismatch(f"monomial of dimension {m.n} in polynomial of dimension {n}")

    # constructors for the generators
    @classmethod
    def constant(cls, n: int, value=1.0) -> "ComplexPolynomial":
        return cls(n, {ComplexMonomial.one(n): value})

    @classmethod
    def _var(cls, n: int, i: int, slot: int) -> "ComplexPolynomial":
        exps = [(0,) * n] * 4
        exps[slot] = _unit(n, i)
        return cls(n, {ComplexMonomial(*exps): 1.0})

    @classmethod
    def x(cls, n, i):
        return cls._var(n, i, 0)

    @classmethod
    def xbar(cls, n, i):
        return cls._var(n, i, 1)

    @classmethod
    def y(cls, n, i):
        return cls._var(n, i, 2)

    @classmethod
    def ybar(cls, n, i):
        return cls._var(n, i, 3)

    @property
    def degree(self) -> int:
        return max((m.degree for m in self.terms), default=0)

    def _check(self, other):
        if self.n != other.n:
            raise DimensionMismatch(f"dimensions differ: {self.n} vs {other.n}")

    def __add__(self, other):
        if not isinstance(other, ComplexPolynomial):
            other = ComplexPolynomial.constant(self.n, other)
        self._check(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0) + c
        return ComplexPolynomial(self.n, out)

    __radd__ = __add__

    def __neg__(self):
        return ComplexPolynomial(self.n, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, ComplexPolynomial):
            return ComplexPolynomial(self.n, {m: c * other for m, c in self.terms.items()})
        self._check(other)
        out: dict = {}
        for (m1, c1), (m2, c2) in product(self.terms.items(), other.terms.items()):
            m = m1 * m2
            out[m] = out.get(m, 0) + c1 * c2
        return ComplexPolynomial(self.n, out)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, ComplexPolynomial):
            return NotImplemented
        return self.n == other.n and self.terms == other.terms

    def __repr__(self):
        return f"ComplexPolynomial(n={self.n}, terms={len(self.terms)})"


def conjugate(p: ComplexPolynomial) -> ComplexPolynomial:
    return ComplexPolynomial(p.n, {m.conjugate(): c.conjugate() for m, c in p.terms.items()})


def is_hermitian(p: ComplexPolynomial, tol: float = 1e-12) -> bool:
    q = conjugate(p)
    keys = set(p.terms) | set(q.terms)
    dev = max((abs(p.terms.get(m, 0) - q.terms.get(m, 0)) for m in keys), default=0.0)
    return dev <= tol


def _sum_sq(n, var):
    return sum((var(n, i) * var(n, i) for i in range(n)), ComplexPolynomial(n))


def _inner(n, u, v):
    return sum((u(n, i) * v(n, i) for i in range(n)), ComplexPolynomial(n))


def cost_complex(conv: CostConvention, n: int) -> ComplexPolynomial:
    """Quartic transport cost as a polynomial in ``(x, x̄, y, ȳ)``."""
    if n < 1:
        raise ValueError("n must be positive")
    P = ComplexPolynomial
    conv = CostConvention.parse(conv)
    if conv is CostConvention.PAPER_CONJUGATE:
        sx, sxb = _sum_sq(n, P.x), _sum_sq(n, P.xbar)
        sy, syb = _sum_sq(n, P.y), _sum_sq(n, P.ybar)
        xy, xyb = _inner(n, P.x, P.y), _inner(n, P.xbar, P.ybar)
        return sx * sxb + sy * syb - 2 * xy * xyb
    nx = _inner(n, P.x, P.xbar)
    ny = _inner(n, P.y, P.ybar)
    overlap = _inner(n, P.xbar, P.y)  # <x, y>
    overlap_c = _inner(n, P.x, P.ybar)
    return nx * nx + ny * ny - 2 * overlap * overlap_c


def cost_value(conv: CostConvention, x, y) -> np.ndarray:
    """Closed-form cost at (batches of) complex vectors; last axis is the coordinate."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    conv = CostConvention.parse(conv)
    if conv is CostConvention.PAPER_CONJUGATE:
        out = (np.abs((x * x).sum(-1)) ** 2 + np.abs((y * y).sum(-1)) ** 2
               - 2 * np.abs((x * y).sum(-1)) ** 2)
    else:
        nx = (np.abs(x) ** 2).sum(-1)
        ny = (np.abs(y) ** 2).sum(-1)
        out = nx ** 2 + ny ** 2 - 2 * np.abs((x.conj() * y).sum(-1)) ** 2
    return out


def _exponent_table(p: ComplexPolynomial):
    mons = list(p.terms)
    if not mons:
        return np.zeros((0, 4 * p.n), dtype=int), np.zeros(0, dtype=complex)
    exps = np.array([m.alpha + m.beta + m.gamma + m.delta for m in mons], dtype=int)
    coefs = np.array([p.terms[m] for m in mons], dtype=complex)
    return exps, coefs


def eval_complex(p: ComplexPolynomial, x, y):
    """Evaluate ``p`` at ``(x, conj(x), y, conj(y))``.

    ``x`` and ``y`` may carry leading batch axes; the result has the batch shape.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if x.shape[-1] != p.n or y.shape[-1] != p.n:
        raise DimensionMismatch(f"expected vectors of length {p.n}, got {x.shape[-1]} and {y.shape[-1]}")
    vals = np.concatenate([x, x.conj(), y, y.conj()], axis=-1)
    exps, coefs = _exponent_table(p)
    powers = np.prod(vals[..., None, :] ** exps, axis=-1)
    out = powers @ coefs
    return out if out.ndim else complex(out)


# -- real side ---------------------------------------------------------------

class RealPolynomial:
    """Sparse real polynomial in ``k = 4n`` variables ``(a, b, c, d)``.

    Monomials are exponent tuples of length ``k``.
    """

    __slots__ = ("k", "terms")

    def __init__(self, k: int, terms: dict | None = None):
        self.k = k
        self.terms = _prune({tuple(m): float(c) for m, c in (terms or {}).items()})
        for m in self.terms:
            if len(m) != k:
                raise DimensionMismatch(f"exponent of length {len(m)} in polynomial of {k} variables")

    @property
    def n(self) -> int:
        return self.k // 4

    @property
    def degree(self) -> int:
        return max((sum(m) for m in self.terms), default=0)

    def __add__(self, other):
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0.0) + c
        return RealPolynomial(self.k, out)

    def __sub__(self, other):
        return self + RealPolynomial(other.k, {m: -c for m, c in other.terms.items()})

    def __mul__(self, other):
        if not isinstance(other, RealPolynomial):
            return RealPolynomial(self.k, {m: c * other for m, c in self.terms.items()})
        out: dict = {}
        for (m1, c1), (m2, c2) in product(self.terms.items(), other.terms.items()):
            m = tuple(i + j for i, j in zip(m1, m2))
            out[m] = out.get(m, 0.0) + c1 * c2
        return RealPolynomial(self.k, out)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, RealPolynomial):
            return NotImplemented
        return self.k == other.k and self.terms == other.terms

    def __repr__(self):
        return f"RealPolynomial(k={self.k}, terms={len(self.terms)})"


def real_variable(n: int, block: str, i: int) -> RealPolynomial:
    """The real coordinate ``a_i``, ``b_i``, ``c_i`` or ``d_i`` (0-based ``i``)."""
    offset = "abcd".index(block) * n
    exp = [0] * (4 * n)
    exp[offset + i] = 1
    return RealPolynomial(4 * n, {tuple(exp): 1.0})


def _cmul(p: dict, q: dict) -> dict:
    out: dict = {}
    for (m1, c1), (m2, c2) in product(p.items(), q.items()):
        m = tuple(i + j for i, j in zip(m1, m2))
        out[m] = out.get(m, 0) + c1 * c2
    return out


def realify(p: ComplexPolynomial, tol: float = 1e-12) -> RealPolynomial:
    """Real part of ``p(a + ib, a - ib, c + id, c - id)`` expanded in ``(a, b, c, d)``.

    For Hermitian ``p`` this is the exact real-valued image of ``p``.
    """
    if not is_hermitian(p, tol):
        raise NotHermitianPolynomial("realify requires a Hermitian polynomial")
    n, k = p.n, 4 * p.n
    one = (0,) * k

    def linear(block_re, block_im, i, sign):
        e_re = [0] * k
        e_im = [0] * k
        e_re[block_re * n + i] = 1
        e_im[block_im * n + i] = 1
        return {tuple(e_re): 1.0 + 0j, tuple(e_im): sign * 1j}

    # x = a + ib, conj(x) = a - ib, y = c + id, conj(y) = c - id
    factors = [
        [linear(0, 1, i, +1) for i in range(n)],
        [linear(0, 1, i, -1) for i in range(n)],
        [linear(2, 3, i, +1) for i in range(n)],
        [linear(2, 3, i, -1) for i in range(n)],
    ]
    total: dict = {}
    for mon, coef in p.terms.items():
        acc = {one: coef}
        for slot, exps in enumerate((mon.alpha, mon.beta, mon.gamma, mon.delta)):
            for i, e in enumerate(exps):
                for _ in range(e):
                    acc = _cmul(acc, factors[slot][i])
        for m, c in acc.items():
            total[m] = total.get(m, 0) + c
    return RealPolynomial(k, {m: c.real for m, c in total.items()})


def embed(x, y) -> np.ndarray:
    """Real coordinates ``(Re x, Im x, Re y, Im y)`` of a point of ``C^n x C^n``."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    return np.concatenate([x.real, x.imag, y.real, y.imag], axis=-1)


def eval_real(p: RealPolynomial, point):
    point = np.asarray(point, dtype=float)
    if point.shape[-1] != p.k:
        raise DimensionMismatch(f"expected points of length {p.k}, got {point.shape[-1]}")
    if not p.terms:
        return np.zeros(point.shape[:-1]) if point.ndim > 1 else 0.0
    exps = np.array(list(p.terms), dtype=int)
    coefs = np.array(list(p.terms.values()))
    out = np.prod(point[..., None, :] ** exps, axis=-1) @ coefs
    return out if out.ndim else float(out)


def hermitian_form(n: int, mat, which: str = "x") -> ComplexPolynomial:
    """The Hermitian polynomial ``x* M x`` (or ``y* M y``) for a matrix ``M``."""
    mat = np.asarray(mat, dtype=complex)
    P = ComplexPolynomial
    left, right = (P.xbar, P.x) if which == "x" else (P.ybar, P.y)
    out = P(n)
    for i in range(n):
        for j in range(n):
            if mat[i, j] != 0:
                out = out + mat[i, j] * left(n, i) * right(n, j)
    return out
