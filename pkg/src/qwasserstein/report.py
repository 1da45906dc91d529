"""Run reports: lower bound, dual certificate, plan-based upper bounds, diagnostics.

Reports are plain dictionaries serialized as canonical JSON. Everything except
the ``timings`` entry is a deterministic function of the inputs and options,
and ``digest`` is the SHA-256 of that deterministic part.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .conic import SolverOptions
from .momentsdp import (
    Gauge,
    build_relaxation,
    dual_witness,
    flatness_report,
    moment_bound_check,
    sample_dual_feasibility,
    solve_relaxation,
)
from .plans import lp_upper_bound, plan_cost, product_plan, sample_atoms, self_plan
from .polycore import CostConvention, cost_value
from .states import haar_vectors, validate_state

DUAL_SAMPLES = 10_000
DEFAULT_ATOMS = 500
NEGATIVE_LOWER_TOL = 1e-8
SAME_STATE_TOL = 1e-12


def _cmat(mat) -> dict:
    mat = np.asarray(mat)
    return {"re": mat.real.tolist(), "im": mat.imag.tolist()}


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def finalize(report: dict, timings: dict) -> dict:
    """Attach ``digest`` (over everything but timings) and ``timings``; unavailable roots are omitted."""
    body = {k: v for k, v in report.items()
            if k not in ("digest", "timings") and not (k.startswith("w2_") and v is None)}
    digest = hashlib.sha256(canonical_json(body).encode()).hexdigest()
    return {**body, "digest": digest, "timings": {k: round(v, 3) for k, v in timings.items()}}


def file_digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def sqrt_or_warn(value: float, conv: CostConvention, warnings: list, label: str):
    """``sqrt(max(value, 0))`` when ``value >= -1e-8``; otherwise ``None`` plus a warning."""
    if value >= -NEGATIVE_LOWER_TOL:
        return math.sqrt(max(value, 0.0))
    warnings.append(
        f"{label} = {value:.10g} is negative under the '{conv.value}' cost convention; this cost is not "
        "nonnegative at complex points of the bi-sphere, so no square root is reported"
    )
    return None


def lower_bound_section(rho, nu, t, conv, opts: SolverOptions, gauge=Gauge.TRACE_GAMMA_ZERO, seed=0):
    """Solve the relaxation and collect certificate and diagnostics."""
    rel = build_relaxation(rho, nu, t, conv)
    lower, moments, sol = solve_relaxation(rel, opts)
    witness = dual_witness(rel, sol, gauge)
    mt = moments.moment_matrix(t)
    flat = flatness_report(moments, t)
    section = {
        "lower_bound": lower,
        "dual": {
            "certified_value": witness.certified_value,
            "gap": lower - witness.certified_value,
            "gauge": Gauge.parse(gauge).value,
            "Lambda": _cmat(witness.Lambda),
            "Gamma": _cmat(witness.Gamma),
        },
        "diagnostics": {
            "moment_bound_worst_violation": moment_bound_check(moments),
            "flatness": flat.as_dict(),
            "moment_matrix_min_eigenvalue": float(np.linalg.eigvalsh(mt)[0]),
            "normalization_error": abs(float(moments.values[0]) - 1.0),
            "dual_sample_min_residual": sample_dual_feasibility(witness, conv, DUAL_SAMPLES, seed),
            "kkt": {"primal": sol.kkt.primal, "dual": sol.kkt.dual, "gap": sol.kkt.gap},
            "iterations": sol.iterations,
            "backend": sol.backend,
            "problem": {**rel.problem.stats(), "range_rows": rel.range_rows},
            "dual_samples_restricted_to_ranges": witness.x_range is not None or witness.y_range is not None,
        },
    }
    return section, witness, sol


def upper_bound_section(rho, nu, conv, opts: SolverOptions, atoms: int = DEFAULT_ATOMS, seed: int = 0):
    """Product-plan cost and, if ``atoms > 0``, the LP bound over product plus random atoms.

    Equal states (entrywise within ``SAME_STATE_TOL``) also get the self plan,
    which pairs each eigenvector with itself.
    """
    prod = product_plan(rho, nu)
    out = {"product_plan": plan_cost(prod, conv)}
    if np.max(np.abs(rho.mat - nu.mat)) <= SAME_STATE_TOL:
        out["self_plan"] = plan_cost(self_plan(rho), conv)
    if atoms > 0:
        atom_set = list(zip(prod.us, prod.vs)) + sample_atoms(rho.n, atoms, seed)
        value, weights = lp_upper_bound(rho, nu, atom_set, conv, opts)
        out["lp"] = value
        out["lp_atoms"] = len(atom_set)
        out["lp_support"] = int(np.count_nonzero(weights))
    out["best"] = min(v for k, v in out.items() if k in ("product_plan", "self_plan", "lp"))
    return out


def inputs_section(rho, nu, conv, tol, seed, t=None, rho_digest=None, nu_digest=None, **extra) -> dict:
    doc = {
        "n": rho.n,
        "convention": CostConvention.parse(conv).value,
        "solver_tolerance": tol,
        "seed": seed,
        "rho": {"matrix": _cmat(rho.mat), "sha256": rho_digest},
        "nu": {"matrix": _cmat(nu.mat), "sha256": nu_digest},
    }
    if t is not None:
        doc["t"] = t
    doc.update(extra)
    return doc


def bound_report(rho, nu, t=2, conv=CostConvention.PROJECTOR_FROBENIUS, tol=1e-8, seed=0,
                 gauge=Gauge.TRACE_GAMMA_ZERO, atoms=0, rho_digest=None, nu_digest=None) -> dict:
    conv = CostConvention.parse(conv)
    opts = SolverOptions(tolerance=tol, seed=seed)
    timings = {}
    t0 = time.perf_counter()
    lower, _, _ = lower_bound_section(rho, nu, t, conv, opts, gauge, seed)
    timings["lower_bound"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    upper = upper_bound_section(rho, nu, conv, opts, atoms, seed)
    timings["upper_bound"] = time.perf_counter() - t0
    warnings = []
    lb = lower["lower_bound"]
    report = {
        "command": "bound",
        "inputs": inputs_section(rho, nu, conv, tol, seed, t, rho_digest, nu_digest, atoms=atoms),
        **lower,
        "upper_bounds": upper,
        "bracket": [lb, upper["best"]],
        "bracket_consistent": bool(lb <= upper["best"] + 1e-6),
        "w2_lower": sqrt_or_warn(lb, conv, warnings, "lower_bound"),
        "w2_upper": sqrt_or_warn(upper["best"], conv, warnings, "upper_bound"),
        "warnings": warnings,
    }
    return finalize(report, timings)


def upper_report(rho, nu, conv=CostConvention.PROJECTOR_FROBENIUS, atoms=DEFAULT_ATOMS, seed=0, tol=1e-8,
                 rho_digest=None, nu_digest=None) -> dict:
    conv = CostConvention.parse(conv)
    t0 = time.perf_counter()
    upper = upper_bound_section(rho, nu, conv, SolverOptions(tolerance=tol, seed=seed), atoms, seed)
    warnings = []
    report = {
        "command": "upper",
        "inputs": inputs_section(rho, nu, conv, tol, seed, None, rho_digest, nu_digest, atoms=atoms),
        "upper_bounds": upper,
        "w2_upper": sqrt_or_warn(upper["best"], conv, warnings, "upper_bound"),
        "warnings": warnings,
    }
    return finalize(report, {"upper_bound": time.perf_counter() - t0})


# -- reference instances ------------------------------------------------------

@dataclass(frozen=True)
class ReferenceInstance:
    name: str
    rho: np.ndarray
    nu: np.ndarray
    expected: float | None  # published lower-bound value, if any
    tol: float
    note: str = ""

    def states(self) -> tuple:
        return validate_state(self.rho), validate_state(self.nu)


REFERENCE_INSTANCES = (
    ReferenceInstance(
        "pure", np.diag([1.0, 0.0]), 0.5 * np.ones((2, 2)), 1.0, 1e-5,
        note="nu is the normalized all-ones matrix 1/2 [[1, 1], [1, 1]]; the unnormalized matrix "
             "has trace 2 and is not a state (erratum).",
    ),
    ReferenceInstance("mixed", np.diag([0.75, 0.25]), 0.5 * np.eye(2), 0.13397, 1e-4),
    ReferenceInstance("saturation", 0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]]), 0.5 * np.ones((2, 2)), 2.0, 1e-5),
)
MIXED_SQRT = 0.36601


@dataclass
class Check:
    name: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.ok else 'FAIL'}] {self.name}: {self.detail}"


def cost_sup_check(conv: CostConvention, count: int = 10_000, seed: int = 0) -> float:
    """Maximum sampled cost on the bi-sphere (both conventions are bounded by 2)."""
    rng = np.random.default_rng(seed)
    x, y = haar_vectors(2, count, rng), haar_vectors(2, count, rng)
    return float(np.max(cost_value(conv, x, y)))


def demo(deep: bool = False, tol: float = 1e-8, seed: int = 0, atoms: int = DEFAULT_ATOMS, log=print):
    """Run the reference instances under both conventions; returns ``(rows, checks)``."""
    opts = SolverOptions(tolerance=tol, seed=seed)
    rows, checks = [], []
    levels = [(inst, 2) for inst in REFERENCE_INSTANCES]
    if deep:
        levels.append((REFERENCE_INSTANCES[1], 3))
    for inst, t in levels:
        rho, nu = inst.states()
        for conv in CostConvention:
            t0 = time.perf_counter()
            lower, witness, _ = lower_bound_section(rho, nu, t, conv, opts, Gauge.TRACE_GAMMA_ZERO, seed)
            upper = upper_bound_section(rho, nu, conv, opts, atoms if t == 2 else 0, seed)
            lb = lower["lower_bound"]
            row = {
                "instance": inst.name, "t": t, "convention": conv.value, "lower": lb,
                "certified": lower["dual"]["certified_value"], "product_plan": upper["product_plan"],
                "lp": upper.get("lp"), "expected": inst.expected,
                "reproduces": bool(inst.expected is not None and abs(lb - inst.expected) <= inst.tol),
                "seconds": time.perf_counter() - t0,
            }
            rows.append(row)
            log(format_row(row))
            tag = f"{inst.name} t={t} {conv.value}"
            gap = abs(lb - row["certified"])
            checks.append(Check(f"duality gap {tag}", gap <= 1e-6, f"|primal - certified| = {gap:.2e} (<= 1e-6)"))
            shifted = witness.shifted(5.0, rho, nu).certified_value
            drift = abs(shifted - witness.certified_value)
            checks.append(Check(f"gauge shift {tag}", drift <= 1e-12, f"drift = {drift:.2e} (<= 1e-12)"))
            mb = lower["diagnostics"]["moment_bound_worst_violation"]
            checks.append(Check(f"moment bound {tag}", mb <= 1e-6, f"worst violation = {mb:.2e} (<= 1e-6)"))
            ub = upper.get("lp", upper["product_plan"])
            checks.append(Check(
                f"sandwich {tag}", lb <= ub + 1e-6 and ub <= upper["product_plan"] + 1e-6,
                f"{lb:.8f} <= {ub:.8f} <= {upper['product_plan']:.8f}",
            ))

    def lowers(name, t):
        return {r["convention"]: r for r in rows if r["instance"] == name and r["t"] == t}

    for inst, t in levels:
        by_conv = lowers(inst.name, t)
        if inst.name == "mixed":
            winners = [c for c, r in by_conv.items() if r["reproduces"]]
            sq = [math.sqrt(by_conv[c]["lower"]) for c in winners]
            ok = bool(winners) and all(abs(s - MIXED_SQRT) <= 1e-4 for s in sq)
            checks.append(Check(
                f"mixed t={t} reproduces {inst.expected}", ok,
                f"reproduced by {winners or 'no convention'}; sqrt = {', '.join(f'{s:.6f}' for s in sq) or 'n/a'}; "
                + ", ".join(f"{c}: {r['lower']:.8f}" for c, r in by_conv.items()),
            ))
        else:
            # all-real instances: both conventions must agree with the reference value
            ok = all(r["reproduces"] for r in by_conv.values())
            checks.append(Check(
                f"{inst.name} t={t} = {inst.expected} (both conventions)", ok,
                ", ".join(f"{c}: {r['lower']:.8f}" for c, r in by_conv.items()) + f" (tol {inst.tol:g})",
            ))
    sup = cost_sup_check(CostConvention.PAPER_CONJUGATE, 10_000, seed)
    checks.append(Check("conjugate cost (--cost paper) bounded by 2", sup <= 2 + 1e-12, f"max over 1e4 samples = {sup:.15f}"))
    return rows, checks


def format_row(row: dict) -> str:
    lp = "-" if row["lp"] is None else f"{row['lp']:.8f}"
    return (f"{row['instance']:<11} t={row['t']} {row['convention']:<9} lower={row['lower']:+.8f} "
            f"certified={row['certified']:+.8f} product={row['product_plan']:.8f} lp={lp} "
            f"[{row['seconds']:.1f}s]")
