"""Quantum transport plans and the upper bounds they certify.

A plan is a finite list of triples ``(w_l, u_l, v_l)`` with positive weights
summing to one and unit vectors ``u_l, v_l`` such that
``sum_l w_l u_l u_l* = rho`` and ``sum_l w_l v_l v_l* = nu``. Its cost is an
upper bound on the squared distance; the moment relaxation gives the lower
bound.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import conic
from .conic import ConicProblem, NonNegCone, SolverOptions, SolverStatus, ZeroCone
from .errors import AtomSetInfeasible, DimensionMismatch, SolverFailed
from .polycore import CostConvention, cost_complex, eval_complex
from .states import DensityMatrix, haar_vectors, spectral_decomposition

WEIGHT_PRUNE = 1e-12


@dataclass(frozen=True, eq=False)
class TransportPlan:
    weights: np.ndarray  # (K,)
    us: np.ndarray  # (K, n) complex
    vs: np.ndarray  # (K, n) complex

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        us = np.atleast_2d(np.asarray(self.us, dtype=complex))
        vs = np.atleast_2d(np.asarray(self.vs, dtype=complex))
        if not (len(w) == len(us) == len(vs)) or us.shape != vs.shape:
            raise DimensionMismatch(f"inconsistent plan shapes: {w.shape}, {us.shape}, {vs.shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "us", us)
        object.__setattr__(self, "vs", vs)

    @classmethod
    def from_triples(cls, triples) -> "TransportPlan":
        triples = list(triples)
        return cls([w for w, _, _ in triples], [u for _, u, _ in triples], [v for _, _, v in triples])

    @property
    def n(self) -> int:
        return self.us.shape[1]

    @property
    def triples(self) -> list:
        return list(zip(self.weights.tolist(), self.us, self.vs))

    def __len__(self):
        return len(self.weights)

    def marginals(self) -> tuple:
        rho = np.einsum("l,li,lj->ij", self.weights, self.us, self.us.conj())
        nu = np.einsum("l,li,lj->ij", self.weights, self.vs, self.vs.conj())
        return rho, nu


@dataclass(frozen=True)
class FeasibilityReport:
    weight_sum_error: float
    max_norm_error: float
    rho_residual: float
    nu_residual: float
    min_weight: float
    tol: float

    @property
    def feasible(self) -> bool:
        return (
            max(self.weight_sum_error, self.max_norm_error, self.rho_residual, self.nu_residual) <= self.tol
            and self.min_weight > 0
        )

    def as_dict(self) -> dict:
        return {
            "weight_sum_error": self.weight_sum_error,
            "max_norm_error": self.max_norm_error,
            "rho_residual": self.rho_residual,
            "nu_residual": self.nu_residual,
            "min_weight": self.min_weight,
            "tol": self.tol,
            "feasible": self.feasible,
        }


def _check_dims(n, *states):
    for s in states:
        if s.n != n:
            raise DimensionMismatch(f"dimension {s.n} does not match {n}")


def check_plan(plan: TransportPlan, rho: DensityMatrix, nu: DensityMatrix, tol: float = 1e-8) -> FeasibilityReport:
    """Residuals of the plan constraints; infeasible plans are reported, never rejected."""
    _check_dims(plan.n, rho, nu)
    r, v = plan.marginals()
    norms = np.concatenate([np.linalg.norm(plan.us, axis=1), np.linalg.norm(plan.vs, axis=1)])
    return FeasibilityReport(
        weight_sum_error=float(abs(plan.weights.sum() - 1.0)),
        max_norm_error=float(np.max(np.abs(norms - 1.0), initial=0.0)),
        rho_residual=float(np.linalg.norm(r - rho.mat)),
        nu_residual=float(np.linalg.norm(v - nu.mat)),
        min_weight=float(np.min(plan.weights, initial=np.inf)),
        tol=tol,
    )


@lru_cache(maxsize=16)
def _cost_poly(conv: CostConvention, n: int):
    return cost_complex(conv, n)


def atom_costs(conv, us, vs) -> np.ndarray:
    us = np.atleast_2d(np.asarray(us, dtype=complex))
    vs = np.atleast_2d(np.asarray(vs, dtype=complex))
    poly = _cost_poly(CostConvention.parse(conv), us.shape[1])
    return np.real(eval_complex(poly, us, vs))


def plan_cost(plan: TransportPlan, conv: CostConvention = CostConvention.PROJECTOR_FROBENIUS) -> float:
    return float(plan.weights @ atom_costs(conv, plan.us, plan.vs))


def product_plan(rho: DensityMatrix, nu: DensityMatrix) -> TransportPlan:
    """Pair every eigenvector of ``rho`` with every eigenvector of ``nu``."""
    _check_dims(rho.n, nu)
    sr, sn = spectral_decomposition(rho), spectral_decomposition(nu)
    w = np.outer(sr.weights, sn.weights).ravel()
    us = np.repeat(sr.vectors, len(sn), axis=0)
    vs = np.tile(sn.vectors, (len(sr), 1))
    return TransportPlan(w, us, vs)


def self_plan(rho: DensityMatrix) -> TransportPlan:
    """Plan pairing each eigenvector of ``rho`` with itself (zero cost, marginals ``rho, rho``)."""
    sd = spectral_decomposition(rho)
    return TransportPlan(sd.weights, sd.vectors, sd.vectors)


def sample_atoms(n: int, count: int, seed: int) -> list:
    """``count`` seeded uniform pairs ``(u, v)`` of unit vectors in ``C^n``."""
    if count < 1:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    us = haar_vectors(n, count, rng)
    vs = haar_vectors(n, count, rng)
    return list(zip(us, vs))


def _marginal_rows(vecs: np.ndarray, mat: np.ndarray):
    """Rows ``sum_k w_k Re/Im(u_k u_k*)_ij = Re/Im mat_ij`` (upper / strict upper triangle)."""
    n = vecs.shape[1]
    outer = np.einsum("ki,kj->kij", vecs, vecs.conj())
    rows, rhs = [], []
    for i in range(n):
        for j in range(i, n):
            rows.append(outer[:, i, j].real)
            rhs.append(mat[i, j].real)
    for i in range(n):
        for j in range(i + 1, n):
            rows.append(outer[:, i, j].imag)
            rhs.append(mat[i, j].imag)
    return rows, rhs


def lp_upper_bound(
    rho: DensityMatrix,
    nu: DensityMatrix,
    atoms,
    conv: CostConvention = CostConvention.PROJECTOR_FROBENIUS,
    opts: SolverOptions | None = None,
):
    """Cheapest plan supported on the given atoms.

    Solves ``min sum_k w_k f(u_k, v_k)`` over ``w >= 0`` subject to the two
    marginal constraints. Returns ``(value, weights)`` with weights below
    1e-12 set to zero.

    Raises
    ------
    AtomSetInfeasible
        When no nonnegative combination of the atoms reproduces both marginals.
    """
    atoms = list(atoms)
    if not atoms:
        raise ValueError("atom set is empty")
    us = np.array([np.asarray(u, dtype=complex) for u, _ in atoms])
    vs = np.array([np.asarray(v, dtype=complex) for _, v in atoms])
    if us.ndim != 2 or us.shape != vs.shape:
        raise DimensionMismatch("atoms must be pairs of vectors of one common length")
    _check_dims(us.shape[1], rho, nu)
    K = len(atoms)
    cost = atom_costs(conv, us, vs)
    r_rows, r_rhs = _marginal_rows(us, rho.mat)
    n_rows, n_rhs = _marginal_rows(vs, nu.mat)
    A_eq = np.array(r_rows + n_rows)
    b_eq = np.array(r_rhs + n_rhs)
    A = sp.vstack([sp.csr_matrix(A_eq), -sp.identity(K, format="csr")]).tocsc()
    b = np.concatenate([b_eq, np.zeros(K)])
    problem = ConicProblem(cost, A, b, (ZeroCone(len(b_eq)), NonNegCone(K)))
    sol = conic.solve(problem, opts or SolverOptions())
    if sol.status is SolverStatus.PRIMAL_INFEASIBLE:
        raise AtomSetInfeasible("atoms cannot reproduce the prescribed marginals")
    if not sol.optimal:
        raise SolverFailed(sol.status.value, f"kkt={tuple(sol.kkt)}")
    weights = np.where(sol.z > WEIGHT_PRUNE, sol.z, 0.0)
    return float(cost @ weights), weights


def plan_from_weights(atoms, weights) -> TransportPlan:
    keep = np.asarray(weights) > 0
    atoms = [a for a, k in zip(atoms, keep) if k]
    return TransportPlan(np.asarray(weights)[keep], [u for u, _ in atoms], [v for _, v in atoms])


# -- plan files --------------------------------------------------------------

def plan_to_dict(plan: TransportPlan) -> dict:
    return {
        "triples": [
            {"w": float(w), "u_re": u.real.tolist(), "u_im": u.imag.tolist(),
             "v_re": v.real.tolist(), "v_im": v.imag.tolist()}
            for w, u, v in plan.triples
        ]
    }


def plan_from_dict(doc: dict) -> TransportPlan:
    try:
        triples = doc["triples"]
        w = [float(t["w"]) for t in triples]
        us = [np.array(t["u_re"], float) + 1j * np.array(t.get("u_im") or np.zeros(len(t["u_re"])), float)
              for t in triples]
        vs = [np.array(t["v_re"], float) + 1j * np.array(t.get("v_im") or np.zeros(len(t["v_re"])), float)
              for t in triples]
    except (KeyError, TypeError, ValueError) as exc:
        raise DimensionMismatch(f"malformed plan document: {exc}") from exc
    if not triples:
        raise DimensionMismatch("plan has no triples")
    return TransportPlan(w, us, vs)


def load_plan(path) -> TransportPlan:
    return plan_from_dict(json.loads(Path(path).read_text()))


def save_plan(plan: TransportPlan, path) -> None:
    Path(path).write_text(json.dumps(plan_to_dict(plan), indent=2) + "\n")
