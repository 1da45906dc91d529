"""Level-t moment relaxations of quantum transport over the real bi-sphere.

The unknown is a linear functional ``L`` on real polynomials of degree at most
``2t`` in ``(a, b, c, d)``, stored as its values on the monomial basis. The
relaxation imposes

* ``M_t(L) >= 0`` (moment matrix),
* ``L(g * m) = 0`` for both sphere polynomials ``g`` and ``deg m <= 2t - 2``,
* the marginal equalities ``L(x x*) = rho`` and ``L(y y*) = nu`` split into
  real (symmetric) and imaginary (antisymmetric) parts,
* ``L(1) = 1``,

and minimizes ``L(f)`` for the realified cost ``f``. Equality multipliers on
the marginal rows give the Hermitian dual witnesses ``(Lambda, Gamma)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations_with_replacement
from math import comb

import numpy as np
import scipy.sparse as sp

from . import conic
from .conic import ConicProblem, PSDCone, Solution, SolverOptions, ZeroCone
from .errors import DimensionMismatch, NoDualAvailable, OrderTooSmall, SolverFailed
from .polycore import CostConvention, cost_value, cost_complex, realify
from .states import DEFAULT_DROP_TOL, DensityMatrix, haar_vectors

KERNEL_TOL = DEFAULT_DROP_TOL


@dataclass(frozen=True, eq=False)
class MonomialBasis:
    """All monomials in ``k`` variables of degree at most ``d``, graded-lex ordered."""

    k: int
    d: int
    monomials: tuple
    index: dict = field(repr=False)
    exponents: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.monomials)

    def lookup(self, mon) -> int:
        return self.index[tuple(mon)]

    def degrees(self) -> np.ndarray:
        return self.exponents.sum(axis=1)

    def prefix(self, d: int) -> int:
        """Number of leading basis elements of degree at most ``d``."""
        return comb(self.k + d, d)


@lru_cache(maxsize=32)
def monomial_basis(k: int, d: int) -> MonomialBasis:
    if k < 1 or d < 0:
        raise ValueError("need k >= 1 and d >= 0")
    mons = []
    for deg in range(d + 1):
        for combo in combinations_with_replacement(range(k), deg):
            e = [0] * k
            for v in combo:
                e[v] += 1
            mons.append(tuple(e))
    exps = np.array(mons, dtype=np.int64).reshape(len(mons), k)
    exps.setflags(write=False)
    return MonomialBasis(k, d, tuple(mons), {m: i for i, m in enumerate(mons)}, exps)


class Gauge(enum.Enum):
    NONE = "none"
    TRACE_GAMMA_ZERO = "trace-gamma-zero"

    @classmethod
    def parse(cls, value) -> "Gauge":
        return value if isinstance(value, cls) else cls(str(value).lower())


@dataclass(frozen=True)
class MarginalRow:
    """Equality row ``L(Re/Im (x x*)_ij) = Re/Im rho_ij`` (or the ``y``/``nu`` analogue)."""

    row: int
    state: str  # "rho" or "nu"
    part: str  # "re" or "im"
    i: int
    j: int


@dataclass(frozen=True, eq=False)
class Relaxation:
    n: int
    t: int
    convention: CostConvention
    basis_t: MonomialBasis
    basis_2t: MonomialBasis
    objective: np.ndarray
    marginal_rows: tuple
    normalization_row: int | None
    problem: ConicProblem
    rho: DensityMatrix
    nu: DensityMatrix
    range_rows: int = 0

    @property
    def moment_side(self) -> int:
        return len(self.basis_t)

    @property
    def num_moments(self) -> int:
        return len(self.basis_2t)

    @property
    def psd_slice(self) -> slice:
        start = self.problem.num_rows - self.problem.cones[-1].size
        return slice(start, self.problem.num_rows)


@dataclass(frozen=True, eq=False)
class MomentVector:
    values: np.ndarray
    basis: MonomialBasis

    def __getitem__(self, mon) -> float:
        return float(self.values[self.basis.lookup(mon)])

    def moment_matrix(self, s: int) -> np.ndarray:
        """``M_s(L)`` indexed by the monomials of degree at most ``s``."""
        if 2 * s > self.basis.d:
            raise ValueError(f"order {s} needs moments up to degree {2 * s}, have {self.basis.d}")
        idx = _product_index(self.basis.k, s, self.basis.d)
        return self.values[idx]

    def localize_marginals(self) -> tuple:
        """Reconstruct ``(L(x x*), L(y y*))`` as complex matrices."""
        n = self.basis.k // 4
        out = []
        for off in (0, 2 * n):
            mat = np.zeros((n, n), dtype=complex)
            for i in range(n):
                for j in range(n):
                    re = self._quad(off + i, off + j) + self._quad(off + n + i, off + n + j)
                    im = self._quad(off + n + i, off + j) - self._quad(off + i, off + n + j)
                    mat[i, j] = re + 1j * im
            out.append(mat)
        return tuple(out)

    def _quad(self, p: int, q: int) -> float:
        e = [0] * self.basis.k
        e[p] += 1
        e[q] += 1
        return self[tuple(e)]


@dataclass(frozen=True)
class DualWitness:
    Lambda: np.ndarray
    Gamma: np.ndarray
    certified_value: float
    gauge: Gauge = Gauge.NONE
    # orthonormal range bases (n x r) when range rows restrict x or y; None = whole sphere
    x_range: np.ndarray | None = None
    y_range: np.ndarray | None = None

    def shifted(self, alpha: float, rho: DensityMatrix, nu: DensityMatrix) -> "DualWitness":
        """``(Lambda + alpha I, Gamma - alpha I)``; feasibility and value are unchanged on the bi-sphere."""
        eye = np.eye(self.Lambda.shape[0])
        lam = self.Lambda + alpha * eye
        gam = self.Gamma - alpha * eye
        return DualWitness(lam, gam, _certified(lam, gam, rho, nu), self.gauge, self.x_range, self.y_range)


def range_basis(state: DensityMatrix) -> np.ndarray | None:
    """Orthonormal basis (columns) of the range of a singular state, ``None`` if full rank."""
    lam, vec = np.linalg.eigh(state.mat)
    keep = lam > KERNEL_TOL
    return None if keep.all() else vec[:, keep]


def _certified(lam, gam, rho, nu) -> float:
    return float(np.real(np.trace(rho.mat @ lam) + np.trace(nu.mat @ gam)))


@lru_cache(maxsize=16)
def _product_index(k: int, t: int, d2: int) -> np.ndarray:
    """``idx[u, v]`` = position of ``basis_t[u] * basis_t[v]`` in the degree-``d2`` basis."""
    bt = monomial_basis(k, t)
    b2 = monomial_basis(k, d2)
    e = bt.exponents
    sums = e[:, None, :] + e[None, :, :]
    idx = np.array([b2.index[tuple(r)] for r in sums.reshape(-1, k)], dtype=np.int64)
    out = idx.reshape(len(bt), len(bt))
    out.setflags(write=False)
    return out


def _shift_index(b2: MonomialBasis, base: np.ndarray, var: int, power: int = 2) -> np.ndarray:
    shifted = base.copy()
    shifted[:, var] += power
    return np.array([b2.index[tuple(r)] for r in shifted], dtype=np.int64)


def build_relaxation(
    rho: DensityMatrix,
    nu: DensityMatrix,
    t: int,
    conv: CostConvention = CostConvention.PROJECTOR_FROBENIUS,
    normalization_row: bool = True,
    range_rows: bool = True,
) -> Relaxation:
    """Assemble the order-``t`` moment relaxation as a :class:`ConicProblem`.

    Rows are ordered: marginal equalities, ``L(1) = 1`` (optional), sphere
    ideal equalities, range ideal equalities, then the moment-matrix PSD block.

    Range rows: for every kernel vector ``w`` of a marginal (eigenvalue at
    most ``KERNEL_TOL``), ``w* x`` vanishes on the support of any feasible
    measure, so ``L(Re(w* x) m) = L(Im(w* x) m) = 0`` for all monomials ``m``
    of degree ``<= 2t - 1``. Without them the dual optimum is not attained
    when one marginal is singular and the other is not, and interior-point
    iterates diverge.
    """
    if rho.n != nu.n:
        raise DimensionMismatch(f"states have dimensions {rho.n} and {nu.n}")
    if t < 2:
        raise OrderTooSmall(f"relaxation order must be >= 2 since the cost has degree 4 (got t={t})")
    conv = CostConvention.parse(conv)
    n = rho.n
    k = 4 * n
    bt = monomial_basis(k, t)
    b2 = monomial_basis(k, 2 * t)
    nv = len(b2)

    f_re = realify(cost_complex(conv, n))
    objective = np.zeros(nv)
    for mon, coef in f_re.terms.items():
        objective[b2.lookup(mon)] += coef

    rows, cols, vals, rhs = [], [], [], []
    row = 0

    def add_row(entries, value):
        nonlocal row
        for col, v in entries:
            rows.append(row)
            cols.append(col)
            vals.append(v)
        rhs.append(value)
        row += 1
        return row - 1

    def quad(p, q):
        e = [0] * k
        e[p] += 1
        e[q] += 1
        return b2.lookup(tuple(e))

    marginal = []
    for state, mat, off in (("rho", rho.mat, 0), ("nu", nu.mat, 2 * n)):
        re_, im_ = off, off + n  # (a, b) for rho, (c, d) for nu
        for i in range(n):
            for j in range(i, n):
                # Re(x_i conj(x_j)) = a_i a_j + b_i b_j
                r = add_row([(quad(re_ + i, re_ + j), 1.0), (quad(im_ + i, im_ + j), 1.0)], mat[i, j].real)
                marginal.append(MarginalRow(r, state, "re", i, j))
        for i in range(n):
            for j in range(i + 1, n):
                # Im(x_i conj(x_j)) = b_i a_j - a_i b_j
                r = add_row([(quad(im_ + i, re_ + j), 1.0), (quad(re_ + i, im_ + j), -1.0)], mat[i, j].imag)
                marginal.append(MarginalRow(r, state, "im", i, j))

    norm_row = add_row([(0, 1.0)], 1.0) if normalization_row else None

    low = b2.exponents[: b2.prefix(2 * t - 2)]
    base_idx = np.arange(len(low))
    for off in (0, 2 * n):
        shifts = [_shift_index(b2, low, off + v) for v in range(2 * n)]
        for r_local in range(len(low)):
            entries = [(int(base_idx[r_local]), 1.0)] + [(int(s[r_local]), -1.0) for s in shifts]
            add_row(entries, 0.0)

    n_range = 0
    if range_rows:
        odd = b2.exponents[: b2.prefix(2 * t - 1)]
        for state, off in ((rho, 0), (nu, 2 * n)):
            lam, vec = np.linalg.eigh(state.mat)
            kernel = vec[:, lam <= KERNEL_TOL].T
            re_shift = [_shift_index(b2, odd, off + i, 1) for i in range(n)]
            im_shift = [_shift_index(b2, odd, off + n + i, 1) for i in range(n)]
            for w in kernel:
                p_, q_ = w.real, w.imag
                # w* x = sum (p a + q b) + i (p b - q a)
                for r_local in range(len(odd)):
                    add_row([(int(re_shift[i][r_local]), p_[i]) for i in range(n) if p_[i]]
                            + [(int(im_shift[i][r_local]), q_[i]) for i in range(n) if q_[i]], 0.0)
                    add_row([(int(im_shift[i][r_local]), p_[i]) for i in range(n) if p_[i]]
                            + [(int(re_shift[i][r_local]), -q_[i]) for i in range(n) if q_[i]], 0.0)
                    n_range += 2
    n_eq = row

    # PSD block: s = svec(M_t(L)) = -A z, so A = -svec coefficients
    side = len(bt)
    idx = _product_index(k, t, 2 * t)
    ij = conic.svec_pairs(side)
    psd_cols = idx[ij[:, 0], ij[:, 1]]
    psd_vals = np.where(ij[:, 0] == ij[:, 1], -1.0, -np.sqrt(2.0))
    psd_rows = n_eq + np.arange(len(ij))

    A = sp.csc_matrix(
        (np.concatenate([vals, psd_vals]), (np.concatenate([rows, psd_rows]), np.concatenate([cols, psd_cols]))),
        shape=(n_eq + len(ij), nv),
    )
    b = np.concatenate([rhs, np.zeros(len(ij))])
    problem = ConicProblem(objective, A, b, (ZeroCone(n_eq), PSDCone(side)))
    return Relaxation(n, t, conv, bt, b2, objective, tuple(marginal), norm_row, problem, rho, nu, n_range)


def solve_relaxation(rel: Relaxation, opts: SolverOptions | None = None):
    """Solve the relaxation; returns ``(lower_bound, MomentVector, Solution)``.

    Raises :class:`SolverFailed` unless the audited status is optimal.
    """
    opts = opts or SolverOptions()
    sol = conic.solve(rel.problem, opts)
    if not sol.optimal:
        raise SolverFailed(sol.status.value, f"kkt={tuple(sol.kkt)}, backend={sol.backend_info}")
    return sol.primal_obj, MomentVector(sol.z.copy(), rel.basis_2t), sol


def dual_witness(rel: Relaxation, raw: Solution, gauge=Gauge.NONE) -> DualWitness:
    """Hermitian ``(Lambda, Gamma)`` from the marginal-row multipliers.

    The multiplier of ``L(1) = 1`` is folded into ``Lambda`` as a multiple of
    the identity (``1 = ||x||^2`` on the sphere). When the relaxation has range
    rows, their multipliers are not part of the witness: ``f >= x*Lambda x +
    y*Gamma y`` is then certified on the ranges of the marginals, which carry
    every feasible measure, and the witness records those ranges.
    """
    if raw is None or not raw.optimal or raw.y is None or len(raw.y) != rel.problem.num_rows:
        raise NoDualAvailable("no optimal dual solution attached to this relaxation")
    gauge = Gauge.parse(gauge)
    n = rel.n
    lam = -np.asarray(raw.y)
    mats = {"rho": np.zeros((n, n), dtype=complex), "nu": np.zeros((n, n), dtype=complex)}
    for mr in rel.marginal_rows:
        w = lam[mr.row]
        mat = mats[mr.state]
        if mr.part == "re":
            if mr.i == mr.j:
                mat[mr.i, mr.i] += w
            else:
                mat[mr.i, mr.j] += w / 2
                mat[mr.j, mr.i] += w / 2
        else:
            mat[mr.i, mr.j] += 1j * w / 2
            mat[mr.j, mr.i] -= 1j * w / 2
    Lam, Gam = mats["rho"], mats["nu"]
    if rel.normalization_row is not None:
        Lam = Lam + lam[rel.normalization_row] * np.eye(n)
    ranges = (range_basis(rel.rho), range_basis(rel.nu)) if rel.range_rows else (None, None)
    w = DualWitness(Lam, Gam, _certified(Lam, Gam, rel.rho, rel.nu), Gauge.NONE, *ranges)
    if gauge is Gauge.TRACE_GAMMA_ZERO:
        w = w.shifted(float(np.trace(Gam).real) / n, rel.rho, rel.nu)
        w = DualWitness(w.Lambda, w.Gamma, w.certified_value, gauge, *ranges)
    return w


def sample_bisphere(n: int, count: int, seed: int) -> tuple:
    """``count`` seeded uniform points ``(x, y)`` on the complex bi-sphere."""
    rng = np.random.default_rng(seed)
    return haar_vectors(n, count, rng), haar_vectors(n, count, rng)


def sample_dual_feasibility(w: DualWitness, conv: CostConvention, count: int, seed: int) -> float:
    """Minimum of ``f - x*Lambda x - y*Gamma y`` over sampled bi-sphere points.

    Points are drawn inside the witness ranges (``x_range``, ``y_range``) when set.
    """
    if count < 1:
        raise ValueError("count must be positive")
    n = w.Lambda.shape[0]
    rng = np.random.default_rng(seed)
    x, y = (haar_vectors(n if U is None else U.shape[1], count, rng) for U in (w.x_range, w.y_range))
    if w.x_range is not None:
        x = x @ w.x_range.T
    if w.y_range is not None:
        y = y @ w.y_range.T
    fx = cost_value(conv, x, y)
    qx = np.einsum("ki,ij,kj->k", x.conj(), w.Lambda, x).real
    qy = np.einsum("ki,ij,kj->k", y.conj(), w.Gamma, y).real
    return float(np.min(fx - qx - qy))


def moment_bound_check(m: MomentVector, tol: float = 1e-6) -> float:
    """Largest ``|L(w)| - 2^(deg w / 2)`` over the basis; should be at most ``tol``."""
    deg = m.basis.degrees()
    return float(np.max(np.abs(m.values) - 2.0 ** (deg / 2.0)))


@dataclass(frozen=True)
class FlatnessReport:
    ranks: tuple  # ((s, rank M_s), ...)
    flat: bool

    def as_dict(self) -> dict:
        return {"ranks": {str(s): r for s, r in self.ranks}, "flat": self.flat}


def numerical_rank(mat: np.ndarray, rank_tol: float) -> int:
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > rank_tol * sv[0]))


def flatness_report(m: MomentVector, t: int, rank_tol: float = 1e-6) -> FlatnessReport:
    """Numerical ranks of ``M_1 .. M_t`` and whether ``rank M_t == rank M_{t-1}``."""
    ranks = tuple((s, numerical_rank(m.moment_matrix(s), rank_tol)) for s in range(1, t + 1))
    flat = len(ranks) >= 2 and ranks[-1][1] == ranks[-2][1]
    return FlatnessReport(ranks, flat)


def dirac_moments(basis: MonomialBasis, point) -> MomentVector:
    """Moments of the point mass at a real ``point`` of length ``basis.k``."""
    point = np.asarray(point, dtype=float)
    vals = np.prod(point[None, :] ** basis.exponents, axis=1)
    return MomentVector(vals, basis)


def plan_moments(basis: MonomialBasis, weights, us, vs) -> MomentVector:
    """Moments of the atomic measure ``sum_l w_l delta_(u_l, v_l)`` in real coordinates."""
    from .polycore import embed

    vals = np.zeros(len(basis))
    for w, u, v in zip(weights, us, vs):
        vals += w * dirac_moments(basis, embed(u, v)).values
    return MomentVector(vals, basis)
