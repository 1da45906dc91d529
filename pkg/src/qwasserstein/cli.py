"""Command-line interface: ``qwasserstein {bound, upper, check-plan, export-sdpa, demo}``.

Exit codes: 0 success, 1 infeasible plan (check-plan), 2 input validation,
3 solver failure, 4 demo acceptance failure.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import report as rp
from .conic import export_sdpa, parse_sdpa, structurally_equal
from .errors import (
    AtomSetInfeasible,
    DimensionMismatch,
    NoDualAvailable,
    OrderTooSmall,
    ParseError,
    SolverFailed,
    StateValidationError,
)
from .momentsdp import Gauge, build_relaxation
from .plans import check_plan, load_plan
from .polycore import CostConvention
from .states import DEFAULT_TOL, load_state

EXIT_INFEASIBLE = 1
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_DEMO = 4

VALIDATION_ERRORS = (StateValidationError, DimensionMismatch, OrderTooSmall, ParseError, OSError,
                     json.JSONDecodeError)
SOLVER_ERRORS = (SolverFailed, AtomSetInfeasible, NoDualAvailable)


def _fail(code: int, exc: Exception):
    click.echo(f"error ({type(exc).__name__}): {exc}", err=True)
    sys.exit(code)


def _run(fn):
    try:
        return fn()
    except VALIDATION_ERRORS as exc:
        _fail(EXIT_VALIDATION, exc)
    except SOLVER_ERRORS as exc:
        _fail(EXIT_SOLVER, exc)


def _load_pair(rho_file, nu_file, state_tol, project):
    rho = load_state(rho_file, state_tol, project)
    nu = load_state(nu_file, state_tol, project)
    if rho.n != nu.n:
        raise DimensionMismatch(f"rho is {rho.n}x{rho.n} but nu is {nu.n}x{nu.n}")
    return rho, nu


def _emit(doc: dict, out):
    text = rp.canonical_json(doc)
    click.echo(text, nl=False)
    if out:
        Path(out).write_text(text)
    for w in doc.get("warnings", []):
        click.echo(f"warning: {w}", err=True)


_cost = click.option("--cost", type=click.Choice([c.value for c in CostConvention]),
                     default=CostConvention.PROJECTOR_FROBENIUS.value, show_default=True,
                     help="Cost convention for f(x, y).")
_tol = click.option("--tol", type=float, default=1e-8, show_default=True, help="Solver KKT tolerance.")
_seed = click.option("--seed", type=int, default=0, show_default=True)
_project = click.option("--project", is_flag=True, help="Project near-states onto density matrices instead of rejecting.")
_state_tol = click.option("--state-tol", type=float, default=DEFAULT_TOL, show_default=True,
                          help="Tolerance for validating input states.")
_out = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Also write the output here.")
_states = [click.argument("rho_file", type=click.Path(exists=True, dir_okay=False)),
           click.argument("nu_file", type=click.Path(exists=True, dir_okay=False))]


def _with(*decos):
    def apply(fn):
        for d in reversed(decos):
            fn = d(fn)
        return fn
    return apply


@click.group()
def main():
    """Moment-SOS lower bounds and transport-plan upper bounds on the quantum W2 distance."""


@main.command()
@_with(*_states)
@click.option("--t", "t", type=int, default=2, show_default=True, help="Relaxation order.")
@_with(_cost, _tol, _seed, _project, _state_tol)
@click.option("--gauge", type=click.Choice([g.value for g in Gauge]), default=Gauge.TRACE_GAMMA_ZERO.value,
              show_default=True, help="Normalization of the dual witness.")
@click.option("--atoms", type=int, default=0, show_default=True,
              help="Random atoms for an additional LP upper bound (0 = product plan only).")
@_out
def bound(rho_file, nu_file, t, cost, tol, seed, project, state_tol, gauge, atoms, out):
    """Lower bound from the order-t moment relaxation, with dual certificate."""
    def go():
        rho, nu = _load_pair(rho_file, nu_file, state_tol, project)
        return rp.bound_report(rho, nu, t, cost, tol, seed, gauge, atoms,
                               rp.file_digest(rho_file), rp.file_digest(nu_file))
    _emit(_run(go), out)


@main.command()
@_with(*_states)
@_with(_cost, _tol, _seed, _project, _state_tol)
@click.option("--atoms", type=int, default=rp.DEFAULT_ATOMS, show_default=True,
              help="Random atoms added to the product-plan atoms for the LP bound.")
@_out
def upper(rho_file, nu_file, cost, tol, seed, project, state_tol, atoms, out):
    """Upper bounds from the product plan and an atom LP."""
    def go():
        rho, nu = _load_pair(rho_file, nu_file, state_tol, project)
        return rp.upper_report(rho, nu, cost, atoms, seed, tol, rp.file_digest(rho_file), rp.file_digest(nu_file))
    _emit(_run(go), out)


@main.command("check-plan")
@click.argument("plan_file", type=click.Path(exists=True, dir_okay=False))
@_with(*_states)
@click.option("--tol", type=float, default=1e-8, show_default=True, help="Feasibility tolerance.")
@_with(_cost, _project, _state_tol, _out)
def check_plan_cmd(plan_file, rho_file, nu_file, tol, cost, project, state_tol, out):
    """Check the marginal constraints of a plan file; exit 0 iff feasible."""
    from .plans import plan_cost

    def go():
        rho, nu = _load_pair(rho_file, nu_file, state_tol, project)
        plan = load_plan(plan_file)
        rep = check_plan(plan, rho, nu, tol)
        return {"command": "check-plan", "triples": len(plan), **rep.as_dict(),
                "plan_cost": plan_cost(plan, cost), "convention": cost}
    doc = _run(go)
    _emit(doc, out)
    if not doc["feasible"]:
        sys.exit(EXIT_INFEASIBLE)


@main.command("export-sdpa")
@_with(*_states)
@click.option("--t", "t", type=int, default=2, show_default=True)
@_with(_cost, _project, _state_tol)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Destination .dat-s file.")
def export_sdpa_cmd(rho_file, nu_file, t, cost, project, state_tol, out):
    """Write the relaxation in SDPA sparse format and print problem statistics."""
    def go():
        rho, nu = _load_pair(rho_file, nu_file, state_tol, project)
        rel = build_relaxation(rho, nu, t, cost)
        text = export_sdpa(rel.problem)
        Path(out).write_text(text)
        stats = rel.problem.stats()
        stats["round_trip_exact"] = structurally_equal(parse_sdpa(text), rel.problem)
        return {"command": "export-sdpa", "path": str(out), **stats}
    click.echo(rp.canonical_json(_run(go)), nl=False)


@main.command()
@click.option("--deep", is_flag=True, help="Also solve the mixed pair at t=3.")
@_with(_tol, _seed)
@click.option("--atoms", type=int, default=rp.DEFAULT_ATOMS, show_default=True)
@_out
def demo(deep, tol, seed, atoms, out):
    """Reference instances under both cost conventions; exit 4 if a check fails."""
    for inst in rp.REFERENCE_INSTANCES:
        if inst.note:
            click.echo(f"note ({inst.name}): {inst.note}")
    rows, checks = _run(lambda: rp.demo(deep, tol, seed, atoms, log=click.echo))
    for c in checks:
        click.echo(c.line())
    mixed = [r["convention"] for r in rows if r["instance"] == "mixed" and r["reproduces"]]
    click.echo(f"convention reproducing the mixed value: {', '.join(sorted(set(mixed))) or 'none'}")
    if out:
        doc = {"rows": [{k: v for k, v in r.items() if k != "seconds"} for r in rows],
               "checks": [{"name": c.name, "ok": c.ok, "detail": c.detail} for c in checks]}
        Path(out).write_text(rp.canonical_json(doc))
    if not all(c.ok for c in checks):
        sys.exit(EXIT_DEMO)


if __name__ == "__main__":
    main()
