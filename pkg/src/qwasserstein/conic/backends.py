"""Solving backends behind a single :func:`solve` entry point.

A backend is a callable ``(problem, options) -> Solution`` registered under a
name. Two in-process interior-point backends ship with the package:

* ``cvxopt`` handles every problem with a PSD cone. Moderate cones use its
  QR-based KKT solver; large ones use a normal-equation solver that builds the
  scaled Hessian from the sparse symmetric structure of the columns, so the cost
  grows with the number of free variables rather than ``side^2``.
* ``clarabel`` is used for purely polyhedral problems (the plan LPs). On the
  degenerate moment SDPs it tends to stop short of the audit tolerance.

Every backend result is audited with :func:`residuals` and reported as
``OPTIMAL`` only when all relative KKT residuals are within the requested
tolerance.
"""
from __future__ import annotations

import logging
import time

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from ..errors import MalformedProblem
from .problem import (
    ConicProblem,
    KKTResiduals,
    NonNegCone,
    PSDCone,
    Solution,
    SolverOptions,
    SolverStatus,
    ZeroCone,
    residuals,
    svec_pairs,
    SQRT2,
)

log = logging.getLogger(__name__)

BACKENDS: dict = {}

# cvxopt switches to the structured normal-equation KKT solver above this side
SCHUR_MIN_SIDE = 100


def register_backend(name: str):
    def deco(fn):
        BACKENDS[name] = fn
        return fn
    return deco


def choose_backend(p: ConicProblem, options: SolverOptions) -> str:
    if options.backend != "auto":
        return options.backend
    return "cvxopt" if any(isinstance(c, PSDCone) for c in p.cones) else "clarabel"


def solve(p: ConicProblem, options: SolverOptions | None = None) -> Solution:
    """Solve ``p`` and return an audited :class:`Solution`.

    Backend statuses are reported verbatim in ``Solution.backend_info``; the
    returned ``status`` is ``OPTIMAL`` only if the independent residual audit
    passes at ``options.tolerance``.
    """
    options = options or SolverOptions()
    if not isinstance(p, ConicProblem):
        raise MalformedProblem("solve expects a ConicProblem")
    name = choose_backend(p, options)
    try:
        backend = BACKENDS[name]
    except KeyError:
        raise MalformedProblem(f"unknown backend {name!r}; available: {sorted(BACKENDS)}") from None
    if p.num_rows == 0:
        return _solve_unconstrained(p)
    t0 = time.perf_counter()
    status, z, y, iters, info = backend(p, options)
    elapsed = time.perf_counter() - t0
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    s = p.b - p.A @ z
    pobj = float(p.c @ z)
    dobj = float(-p.b @ y)
    draft = Solution(status, z, y, s, pobj, dobj, KKTResiduals(np.inf, np.inf, np.inf),
                     iters, elapsed, name, info)
    draft.kkt = residuals(p, draft)
    if status is SolverStatus.OPTIMAL and draft.kkt.max() > options.tolerance:
        log.warning("backend %s reported success but audit found %s", name, draft.kkt)
        draft.status = SolverStatus.NUMERICAL_TROUBLE
    return draft


def _solve_unconstrained(p: ConicProblem) -> Solution:
    z = np.zeros(p.num_vars)
    y = np.zeros(0)
    status = SolverStatus.OPTIMAL if not np.any(p.c) else SolverStatus.DUAL_INFEASIBLE
    sol = Solution(status, z, y, np.zeros(0), 0.0, 0.0, KKTResiduals(0.0, 0.0, 0.0), 0, 0.0, "none", {})
    sol.kkt = residuals(p, sol)
    return sol


# -- clarabel ----------------------------------------------------------------

@register_backend("clarabel")
def _clarabel(p: ConicProblem, options: SolverOptions):
    import clarabel

    cones = []
    for cone in p.cones:
        if isinstance(cone, ZeroCone):
            cones.append(clarabel.ZeroConeT(cone.dim))
        elif isinstance(cone, NonNegCone):
            cones.append(clarabel.NonnegativeConeT(cone.dim))
        else:
            cones.append(clarabel.PSDTriangleConeT(cone.side))
    settings = clarabel.DefaultSettings()
    settings.verbose = bool(options.verbose)
    settings.max_iter = int(options.max_iterations)
    # internal tolerances are on the equilibrated problem; keep headroom for the audit
    inner = options.tolerance * 1e-2
    settings.tol_gap_abs = inner
    settings.tol_gap_rel = inner
    settings.tol_feas = inner
    settings.tol_ktratio = 1e-8
    settings.presolve_enable = False
    P = sp.csc_matrix((p.num_vars, p.num_vars))
    solver = clarabel.DefaultSolver(P, p.c, p.A, p.b, cones, settings)
    res = solver.solve()
    name = str(res.status).split(".")[-1]
    mapping = {
        "Solved": SolverStatus.OPTIMAL,
        "AlmostSolved": SolverStatus.OPTIMAL,
        "PrimalInfeasible": SolverStatus.PRIMAL_INFEASIBLE,
        "AlmostPrimalInfeasible": SolverStatus.PRIMAL_INFEASIBLE,
        "DualInfeasible": SolverStatus.DUAL_INFEASIBLE,
        "AlmostDualInfeasible": SolverStatus.DUAL_INFEASIBLE,
        "MaxIterations": SolverStatus.MAX_ITER,
        "MaxTime": SolverStatus.MAX_ITER,
    }
    status = mapping.get(name, SolverStatus.NUMERICAL_TROUBLE)
    info = {
        "backend_status": name,
        "r_prim": float(res.r_prim),
        "r_dual": float(res.r_dual),
        "obj_val": float(res.obj_val),
        "obj_val_dual": float(res.obj_val_dual),
    }
    return status, np.array(res.x), np.array(res.z), int(res.iterations), info


# -- cvxopt ------------------------------------------------------------------

def _independent_rows(A: sp.spmatrix, rel_tol: float = 1e-10) -> np.ndarray:
    """Indices of a maximal linearly independent subset of the rows of ``A``."""
    if A.shape[0] == 0:
        return np.zeros(0, dtype=int)
    dense = A.toarray()
    _, r, piv = scipy.linalg.qr(dense.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0:
        return np.zeros(0, dtype=int)
    rank = int(np.sum(diag > rel_tol * diag[0]))
    return np.sort(piv[:rank])


def _cho(mat: np.ndarray):
    """Cholesky factor with a tiny diagonal shift as a fallback for near-singular systems."""
    try:
        return scipy.linalg.cho_factor(mat, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        shift = 1e-13 * max(float(np.trace(mat)) / max(len(mat), 1), 1e-300)
        for _ in range(8):
            try:
                return scipy.linalg.cho_factor(mat + shift * np.eye(len(mat)), lower=True, check_finite=False)
            except np.linalg.LinAlgError:
                shift *= 100
        raise


def _schur_kktsolver(G_lin: sp.csr_matrix, G_sym: list, sides: list, A_eq: np.ndarray):
    """KKT solver for ``conelp`` that reduces each system to the normal equations.

    The scaled Hessian ``H = G^T W^{-1} W^{-T} G`` is assembled column by
    column from the sparse symmetric cells of each variable, so the cost is
    governed by the number of moment variables and not by ``side^2``.
    ``G_sym[k]`` is the full (both triangles) column-major image of block ``k``.
    """
    nvars = G_lin.shape[1]
    nl = G_lin.shape[0]
    cells = []
    for Gf, side in zip(G_sym, sides):
        Gc = Gf.tocsc()
        per_var = []
        for v in range(nvars):
            lo, hi = Gc.indptr[v], Gc.indptr[v + 1]
            idx = Gc.indices[lo:hi]
            per_var.append((idx % side, idx // side, Gc.data[lo:hi]))
        cells.append((Gf.T.tocsr(), per_var))
    batch = 256
    p = A_eq.shape[0]
    if p:
        # equalities are eliminated on the nullspace of A, which is far better
        # conditioned near the optimum than the Schur complement A H^-1 A^T
        Qa, Ra = scipy.linalg.qr(A_eq.T)
        Q1, Q2, R1 = Qa[:, :p], Qa[:, p:], Ra[:p]

    def factor(W):
        from cvxopt import matrix

        di = np.array(W["di"]).ravel()
        H = np.zeros((nvars, nvars))
        if nl:
            Gd = sp.diags(di) @ G_lin
            H += (Gd.T @ Gd).toarray()
        rtis = [np.array(r) for r in W["rti"]]
        Ps = []
        for (GfT, per_var), rti, side in zip(cells, rtis, sides):
            P = rti @ rti.T
            Ps.append(P)
            for start in range(0, nvars, batch):
                stop = min(start + batch, nvars)
                Q = np.zeros((side * side, stop - start))
                for col, v in enumerate(range(start, stop)):
                    a, b, g = per_var[v]
                    if len(g):
                        Q[:, col] = ((P[:, a] * g) @ P[b, :]).ravel()
                H[:, start:stop] += GfT @ Q
        H = (H + H.T) / 2
        if p:
            K = Q2.T @ H @ Q2
            Kf = _cho((K + K.T) / 2)
        else:
            Kf = _cho(H)

        def solve(x, y, z):
            bz = np.array(z).ravel()
            r1 = np.array(x).ravel().copy()
            if nl:
                r1 += G_lin.T @ (di ** 2 * bz[:nl])
            blocks = []
            off = nl
            for (GfT, _), P, side in zip(cells, Ps, sides):
                B = bz[off: off + side * side].reshape(side, side, order="F")
                B = np.tril(B) + np.tril(B, -1).T
                blocks.append(B)
                r1 += GfT @ (P @ B @ P).ravel(order="F")
                off += side * side
            if p:
                x0 = Q1 @ scipy.linalg.solve_triangular(R1, np.array(y).ravel(), trans="T", check_finite=False)
                w = scipy.linalg.cho_solve(Kf, Q2.T @ (r1 - H @ x0), check_finite=False)
                ux = x0 + Q2 @ w
                uy = scipy.linalg.solve_triangular(R1, Q1.T @ (r1 - H @ ux), check_finite=False)
                y[:] = matrix(uy)
            else:
                ux = scipy.linalg.cho_solve(Kf, r1, check_finite=False)
            x[:] = matrix(ux)
            out = np.empty_like(bz)
            if nl:
                out[:nl] = di * (G_lin @ ux - bz[:nl])
            off = nl
            for (GfT, _), B, rti, side in zip(cells, blocks, rtis, sides):
                M = (GfT.T @ ux).reshape(side, side, order="F") - B
                out[off: off + side * side] = (rti.T @ M @ rti).ravel(order="F")
                off += side * side
            z[:] = matrix(out)

        return solve

    return factor


@register_backend("cvxopt")
def _cvxopt(p: ConicProblem, options: SolverOptions):
    from cvxopt import matrix, solvers, spmatrix

    eq_rows, lin_rows, psd_blocks = [], [], []
    for cone, sl in p.cone_slices():
        rows = np.arange(sl.start, sl.stop)
        if isinstance(cone, ZeroCone):
            eq_rows.append(rows)
        elif isinstance(cone, NonNegCone):
            lin_rows.append(rows)
        else:
            psd_blocks.append((cone.side, rows))
    eq_rows = np.concatenate(eq_rows) if eq_rows else np.zeros(0, dtype=int)
    lin_rows = np.concatenate(lin_rows) if lin_rows else np.zeros(0, dtype=int)

    A_csr = p.A.tocsr()
    A_eq = A_csr[eq_rows]
    keep = _independent_rows(A_eq)
    kept_eq = eq_rows[keep]

    # G stacks the 'l' rows then each 's' block as a column-major full matrix (lower part)
    g_parts, h_parts = [A_csr[lin_rows]], [p.b[lin_rows]]
    g_sym = []
    for side, rows in psd_blocks:
        ij = svec_pairs(side)
        target = ij[:, 0] * side + ij[:, 1]  # lower-triangular (j, i) in column-major
        scale = np.where(ij[:, 0] == ij[:, 1], 1.0, 1.0 / SQRT2)
        block = sp.diags(scale) @ A_csr[rows]
        perm = sp.csr_matrix((np.ones(len(rows)), (target, np.arange(len(rows)))), shape=(side * side, len(rows)))
        g_parts.append(perm @ block)
        off = ij[:, 0] != ij[:, 1]
        mirror = sp.csr_matrix((np.ones(off.sum()), (ij[off, 1] * side + ij[off, 0], np.flatnonzero(off))),
                               shape=(side * side, len(rows)))
        g_sym.append((perm + mirror) @ block)
        h_parts.append(perm @ (scale * p.b[rows]))
    G = sp.vstack(g_parts).tocoo()
    h = np.concatenate(h_parts)

    def to_sp(m):
        m = m.tocoo()
        return spmatrix(m.data.tolist(), m.row.tolist(), m.col.tolist(), size=m.shape)

    dims = {"l": int(len(lin_rows)), "q": [], "s": [side for side, _ in psd_blocks]}
    # the structured normal-equation solver is fast but squares the conditioning of the
    # scaled constraint matrix, so it only targets the requested tolerance
    schur = bool(dims["s"]) and max(dims["s"]) > SCHUR_MIN_SIDE
    inner = 1.0 if schur else 1e-2
    opts = {
        "show_progress": bool(options.verbose),
        "maxiters": int(options.max_iterations),
        "abstol": options.tolerance * inner,
        "reltol": options.tolerance * inner,
        "feastol": options.tolerance * inner,
        "refinement": 2,
    }
    A_kept = A_csr[kept_eq]
    args = dict(options=opts)
    if len(kept_eq):
        args.update(A=to_sp(A_kept), b=matrix(p.b[kept_eq]))
    if schur:
        args["kktsolver"] = _schur_kktsolver(
            A_csr[lin_rows], g_sym, dims["s"], A_kept.toarray() if len(kept_eq) else np.zeros((0, p.num_vars))
        )
    try:
        res = solvers.conelp(matrix(p.c), to_sp(G), matrix(h), dims, **args)
    except (ArithmeticError, ValueError) as exc:
        # singular scalings or KKT systems surface as exceptions rather than statuses
        info = {"backend_status": f"exception: {type(exc).__name__}: {exc}",
                "dropped_dependent_equalities": int(len(eq_rows) - len(kept_eq)),
                "kktsolver": "schur" if schur else "qr"}
        return SolverStatus.NUMERICAL_TROUBLE, np.zeros(p.num_vars), np.zeros(p.num_rows), 0, info

    status_name = res["status"]
    y = np.zeros(p.num_rows)
    if res["x"] is None:
        z = np.zeros(p.num_vars)
    else:
        z = np.array(res["x"]).ravel()
        if res["y"] is not None and len(kept_eq):
            y[kept_eq] = np.array(res["y"]).ravel()
        zc = np.array(res["z"]).ravel()
        y[lin_rows] = zc[: len(lin_rows)]
        offset = len(lin_rows)
        for side, rows in psd_blocks:
            Z = zc[offset: offset + side * side].reshape(side, side, order="F")
            Z = (Z + Z.T) / 2
            ij = svec_pairs(side)
            vals = Z[ij[:, 0], ij[:, 1]]
            vals[ij[:, 0] != ij[:, 1]] *= SQRT2
            y[rows] = vals
            offset += side * side
    if status_name == "optimal":
        status = SolverStatus.OPTIMAL
    elif status_name == "primal infeasible":
        status = SolverStatus.PRIMAL_INFEASIBLE
    elif status_name == "dual infeasible":
        status = SolverStatus.DUAL_INFEASIBLE
    elif res.get("iterations", 0) >= opts["maxiters"]:
        status = SolverStatus.MAX_ITER
    else:
        # cvxopt returns 'unknown' when it stalls; the audit decides whether the point is usable
        status = SolverStatus.OPTIMAL if res["x"] is not None else SolverStatus.NUMERICAL_TROUBLE
    info = {
        "backend_status": status_name,
        "dropped_dependent_equalities": int(len(eq_rows) - len(kept_eq)),
        "kktsolver": "schur" if schur else "qr",
        "primal_infeasibility": res.get("primal infeasibility"),
        "dual_infeasibility": res.get("dual infeasibility"),
    }
    return status, z, y, int(res.get("iterations", 0)), info
