"""Standard-form conic programs and their audited solutions.

A problem reads::

    minimize    <c, z>
    subject to  A z + s = b,   s in K_1 x ... x K_p,   z free

with each ``K_i`` a zero cone, a nonnegative orthant or a PSD cone stored in
scaled half-vectorized form (``svec``): the upper triangle of a symmetric
``side x side`` matrix, column by column, off-diagonal entries times sqrt(2).
The dual is ``maximize -<b, y>`` subject to ``c + A^T y = 0`` and ``y`` in the
dual cone (free on zero-cone rows).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from ..errors import DimensionMismatch, MalformedProblem

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class ZeroCone:
    dim: int

    @property
    def size(self) -> int:
        return self.dim


@dataclass(frozen=True)
class NonNegCone:
    dim: int

    @property
    def size(self) -> int:
        return self.dim


@dataclass(frozen=True)
class PSDCone:
    side: int

    @property
    def size(self) -> int:
        return self.side * (self.side + 1) // 2


Cone = ZeroCone | NonNegCone | PSDCone


def svec_index(i: int, j: int) -> int:
    """Position of upper-triangular entry ``(i, j)``, ``i <= j``, in ``svec``."""
    if i > j:
        i, j = j, i
    return j * (j + 1) // 2 + i


def svec_pairs(side: int) -> np.ndarray:
    """``(i, j)`` pairs in ``svec`` order, shape ``(side*(side+1)/2, 2)``."""
    return np.array([(i, j) for j in range(side) for i in range(j + 1)], dtype=int)


def svec(mat) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    ij = svec_pairs(mat.shape[0])
    out = mat[ij[:, 0], ij[:, 1]].copy()
    out[ij[:, 0] != ij[:, 1]] *= SQRT2
    return out


def smat(vec, side: int | None = None) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if side is None:
        side = int(round((np.sqrt(8 * len(vec) + 1) - 1) / 2))
    ij = svec_pairs(side)
    if len(ij) != len(vec):
        raise DimensionMismatch(f"svec of length {len(vec)} does not match side {side}")
    vals = vec.copy()
    vals[ij[:, 0] != ij[:, 1]] /= SQRT2
    out = np.zeros((side, side))
    out[ij[:, 0], ij[:, 1]] = vals
    out[ij[:, 1], ij[:, 0]] = vals
    return out


@dataclass(frozen=True, eq=False)
class ConicProblem:
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: tuple

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        A = sp.csc_matrix(self.A, dtype=float)
        A.sum_duplicates()
        A.eliminate_zeros()
        A.sort_indices()
        cones = tuple(self.cones)
        for cone in cones:
            if not isinstance(cone, (ZeroCone, NonNegCone, PSDCone)):
                raise MalformedProblem(f"unknown cone {cone!r}")
            if (cone.side if isinstance(cone, PSDCone) else cone.dim) <= 0:
                raise MalformedProblem(f"cone dimensions must be positive: {cone!r}")
        if A.shape != (len(b), len(c)):
            raise MalformedProblem(f"A has shape {A.shape}, expected ({len(b)}, {len(c)})")
        total = sum(cone.size for cone in cones)
        if total != len(b):
            raise MalformedProblem(f"cones cover {total} rows but b has {len(b)}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(b)) and np.all(np.isfinite(A.data))):
            raise MalformedProblem("problem data must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "cones", cones)

    @property
    def num_vars(self) -> int:
        return len(self.c)

    @property
    def num_rows(self) -> int:
        return len(self.b)

    def cone_slices(self):
        """Yield ``(cone, slice)`` pairs over the rows of ``A``."""
        start = 0
        for cone in self.cones:
            yield cone, slice(start, start + cone.size)
            start += cone.size

    def stats(self) -> dict:
        psd = [cone.side for cone in self.cones if isinstance(cone, PSDCone)]
        return {
            "variables": self.num_vars,
            "rows": self.num_rows,
            "equality_rows": sum(c.dim for c in self.cones if isinstance(c, ZeroCone)),
            "nonneg_rows": sum(c.dim for c in self.cones if isinstance(c, NonNegCone)),
            "psd_sides": psd,
            "nnz": int(self.A.nnz),
        }


def structurally_equal(p: ConicProblem, q: ConicProblem, rtol: float = 0.0) -> bool:
    """Same cones, same sparsity and values within ``rtol`` (relative)."""
    if p.cones != q.cones or p.A.shape != q.A.shape:
        return False
    if not (np.array_equal(p.A.indptr, q.A.indptr) and np.array_equal(p.A.indices, q.A.indices)):
        return False

    def close(u, v):
        return np.all(np.abs(u - v) <= rtol * np.maximum(np.abs(u), np.abs(v)))

    return bool(close(p.A.data, q.A.data) and close(p.b, q.b) and close(p.c, q.c))


class SolverStatus(enum.Enum):
    OPTIMAL = "optimal"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"
    MAX_ITER = "max_iter"
    NUMERICAL_TROUBLE = "numerical_trouble"


class KKTResiduals(NamedTuple):
    primal: float
    dual: float
    gap: float

    def max(self) -> float:
        return max(self)


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iterations: int = 200
    verbose: bool = False
    seed: int = 0
    backend: str = "auto"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass(eq=False)
class Solution:
    status: SolverStatus
    z: np.ndarray
    y: np.ndarray
    s: np.ndarray
    primal_obj: float
    dual_obj: float
    kkt: KKTResiduals
    iterations: int
    solve_seconds: float
    backend: str = ""
    backend_info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is SolverStatus.OPTIMAL


def _cone_distance(vec: np.ndarray, cone, dual: bool) -> float:
    """How far ``vec`` lies outside ``cone`` (or its dual), 0 when inside."""
    if isinstance(cone, ZeroCone):
        return 0.0 if dual else float(np.max(np.abs(vec), initial=0.0))
    if isinstance(cone, NonNegCone):
        return float(max(0.0, -np.min(vec, initial=0.0)))
    lam_min = np.linalg.eigvalsh(smat(vec, cone.side))[0]
    return float(max(0.0, -lam_min))


def residuals(p: ConicProblem, sol: Solution) -> KKTResiduals:
    """Recompute relative KKT residuals from ``sol.z`` and ``sol.y`` alone.

    primal: cone infeasibility of ``b - A z`` relative to ``1 + |b|_inf``;
    dual: ``|c + A^T y|_inf`` and dual-cone violation relative to ``1 + |c|_inf``;
    gap: ``|<c,z> + <b,y>|`` relative to ``1 + |<c,z>| + |<b,y>|``.
    """
    z = np.asarray(sol.z, dtype=float)
    y = np.asarray(sol.y, dtype=float)
    if z.shape != (p.num_vars,) or y.shape != (p.num_rows,):
        raise DimensionMismatch(
            f"solution shapes z{z.shape}, y{y.shape} do not fit problem ({p.num_vars} vars, {p.num_rows} rows)"
        )
    if p.num_rows == 0:
        return KKTResiduals(0.0, float(np.max(np.abs(p.c), initial=0.0)), 0.0)
    slack = p.b - p.A @ z
    pres = max((_cone_distance(slack[sl], cone, dual=False) for cone, sl in p.cone_slices()), default=0.0)
    pres /= 1.0 + np.max(np.abs(p.b), initial=0.0)
    stat = p.c + p.A.T @ y
    dres = max(
        float(np.max(np.abs(stat), initial=0.0)),
        max((_cone_distance(y[sl], cone, dual=True) for cone, sl in p.cone_slices()), default=0.0),
    )
    dres /= 1.0 + np.max(np.abs(p.c), initial=0.0)
    pobj = float(p.c @ z)
    dobj = float(-p.b @ y)
    gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    return KKTResiduals(float(pres), float(dres), float(gap))
