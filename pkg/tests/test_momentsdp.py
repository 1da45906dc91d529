from math import comb

import numpy as np
import pytest

from qwasserstein.conic import PSDCone, ZeroCone
from qwasserstein.errors import DimensionMismatch, NoDualAvailable, OrderTooSmall, SolverFailed
from qwasserstein.momentsdp import (
    DualWitness,
    Gauge,
    MomentVector,
    build_relaxation,
    dirac_moments,
    dual_witness,
    flatness_report,
    moment_bound_check,
    monomial_basis,
    plan_moments,
    sample_bisphere,
    sample_dual_feasibility,
    solve_relaxation,
)
from qwasserstein.plans import plan_cost, product_plan
from qwasserstein.polycore import CostConvention, cost_value, embed, eval_real, realify, cost_complex
from qwasserstein.states import random_density, validate_state

from conftest import random_pair, solved, states, witness

PAPER, FROB = CostConvention.PAPER_CONJUGATE, CostConvention.PROJECTOR_FROBENIUS


def test_monomial_basis_examples():
    b = monomial_basis(2, 1)
    assert b.monomials == ((0, 0), (1, 0), (0, 1))
    assert len(monomial_basis(8, 2)) == 45
    assert len(monomial_basis(8, 4)) == 495
    b = monomial_basis(5, 3)
    assert len(b) == comb(8, 3)
    assert all(b.lookup(m) == i for i, m in enumerate(b.monomials))
    assert len(set(b.monomials)) == len(b)
    assert list(b.degrees()) == sorted(b.degrees())
    assert b.prefix(2) == comb(7, 2)
    with pytest.raises(ValueError):
        monomial_basis(0, 2)


@pytest.mark.parametrize("t, side, nvars", [(2, 45, 495), (3, 165, 3003)])
def test_relaxation_sizes(t, side, nvars):
    rho, nu = states("mixed")
    rel = build_relaxation(rho, nu, t)
    assert rel.moment_side == side
    assert rel.num_moments == nvars
    p = rel.problem
    assert p.cones[-1] == PSDCone(side)
    marg = 2 * (3 + 1)  # per state: 3 symmetric + 1 antisymmetric entries
    sphere = 2 * comb(8 + 2 * t - 2, 2 * t - 2)
    assert p.cones[0] == ZeroCone(marg + 1 + sphere)


def test_relaxation_structure():
    rho, nu = states("pure")
    rel = build_relaxation(rho, nu, 2, PAPER)
    assert rel.convention is PAPER
    assert rel.normalization_row == 8
    assert len(rel.marginal_rows) == 8
    degs = rel.basis_2t.degrees()
    assert np.all(degs[np.flatnonzero(rel.objective)] <= 4)
    # objective coefficients are the realified cost
    f = realify(cost_complex(PAPER, 2))
    for mon, coef in f.terms.items():
        assert rel.objective[rel.basis_2t.lookup(mon)] == pytest.approx(coef)
    no_norm = build_relaxation(rho, nu, 2, normalization_row=False)
    assert no_norm.normalization_row is None
    assert no_norm.problem.num_rows == rel.problem.num_rows - 1


def test_relaxation_errors():
    rho, nu = states("mixed")
    with pytest.raises(OrderTooSmall):
        build_relaxation(rho, nu, 1)
    with pytest.raises(DimensionMismatch):
        build_relaxation(rho, validate_state(np.eye(3) / 3), 2)


def test_feasible_measure_satisfies_constraints():
    """Moments of the product plan satisfy every equality row and the PSD constraint."""
    rho, nu = states("mixed")
    rel = build_relaxation(rho, nu, 2)
    plan = product_plan(rho, nu)
    m = plan_moments(rel.basis_2t, plan.weights, plan.us, plan.vs)
    p = rel.problem
    slack = p.b - p.A @ m.values
    n_eq = p.cones[0].dim
    assert np.max(np.abs(slack[:n_eq])) <= 1e-12
    assert np.linalg.eigvalsh(m.moment_matrix(2))[0] >= -1e-12
    assert rel.objective @ m.values == pytest.approx(plan_cost(plan, FROB))


@pytest.mark.parametrize("name, expected, tol", [("pure", 1.0, 1e-5), ("mixed", 0.13397, 1e-4),
                                                 ("saturation", 2.0, 1e-5)])
def test_reference_lower_bounds(name, expected, tol):
    _, lower, _, _ = solved(name)
    assert abs(lower - expected) <= tol


def test_conjugate_convention_values():
    # identical on the all-real instances, very different (negative) on the mixed one
    assert solved("pure", 2, "paper")[1] == pytest.approx(1.0, abs=1e-6)
    assert solved("saturation", 2, "paper")[1] == pytest.approx(2.0, abs=1e-6)
    assert solved("mixed", 2, "paper")[1] == pytest.approx(-1.6160254038, abs=1e-6)


def test_mixed_value_closed_form():
    # observed value matches 1 - sqrt(3)/2
    assert solved("mixed")[1] == pytest.approx(1 - np.sqrt(3) / 2, abs=1e-7)


@pytest.mark.parametrize("seed", range(3))
def test_equal_states_zero(seed):
    rho = random_density(2, 1 + seed % 2, seed)
    rel = build_relaxation(rho, rho, 2)
    lower, _, _ = solve_relaxation(rel)
    assert abs(lower) <= 1e-6


@pytest.mark.parametrize("name", ["pure", "mixed", "saturation", "random0", "random3"])
def test_solution_invariants(name):
    rel, lower, m, sol = solved(name)
    assert abs(m.values[0] - 1) <= 1e-7
    L_rho, L_nu = m.localize_marginals()
    assert np.max(np.abs(L_rho - rel.rho.mat)) <= 1e-7
    assert np.max(np.abs(L_nu - rel.nu.mat)) <= 1e-7
    assert np.linalg.eigvalsh(m.moment_matrix(2))[0] >= -1e-7
    assert moment_bound_check(m) <= 1e-6
    w = dual_witness(rel, sol)
    assert np.max(np.abs(w.Lambda - w.Lambda.conj().T)) <= 1e-10
    assert np.max(np.abs(w.Gamma - w.Gamma.conj().T)) <= 1e-10
    assert w.certified_value <= lower + 1e-6
    assert abs(w.certified_value - lower) <= 1e-6
    assert lower <= plan_cost(product_plan(rel.rho, rel.nu), rel.convention) + 1e-6


def test_dual_gauge():
    rel, lower, _, sol = solved("mixed")
    raw = dual_witness(rel, sol, Gauge.NONE)
    gauged = dual_witness(rel, sol, "trace-gamma-zero")
    assert gauged.gauge is Gauge.TRACE_GAMMA_ZERO
    assert abs(np.trace(gauged.Gamma)) <= 1e-12
    assert abs(gauged.certified_value - raw.certified_value) <= 1e-12
    shifted = raw.shifted(5.0, rel.rho, rel.nu)
    assert abs(shifted.certified_value - raw.certified_value) <= 1e-12
    assert np.allclose(shifted.Lambda - raw.Lambda, 5 * np.eye(2))


def test_dual_requires_optimal_solution():
    rel, _, _, sol = solved("pure")
    import dataclasses
    from qwasserstein.conic import SolverStatus

    with pytest.raises(NoDualAvailable):
        dual_witness(rel, dataclasses.replace(sol, status=SolverStatus.MAX_ITER))
    with pytest.raises(NoDualAvailable):
        dual_witness(rel, None)


def test_pure_witness_is_feasible_on_samples():
    w = witness("pure")
    res = sample_dual_feasibility(w, FROB, 10_000, seed=0)
    assert res >= -1e-6
    assert w.certified_value == pytest.approx(1.0, abs=1e-6)
    # same samples give the same minimum
    assert sample_dual_feasibility(w, FROB, 10_000, seed=0) == res
    shifted = w.shifted(5.0, *states("pure"))
    assert abs(sample_dual_feasibility(shifted, FROB, 10_000, seed=0) - res) <= 1e-12


def test_witnesses_feasible_on_samples():
    for name in ("mixed", "saturation"):
        for conv in ("frobenius", "paper"):
            w = witness(name, 2, conv)
            assert sample_dual_feasibility(w, conv, 5000, seed=1) >= -1e-6


def test_zero_witness_sampling():
    zero = DualWitness(np.zeros((2, 2)), np.zeros((2, 2)), 0.0)
    res = sample_dual_feasibility(zero, PAPER, 2000, seed=3)
    xs, ys = sample_bisphere(2, 2000, 3)
    assert res == pytest.approx(np.min(cost_value(PAPER, xs, ys)))
    with pytest.raises(ValueError):
        sample_dual_feasibility(zero, PAPER, 0, seed=0)


def test_moment_bound_check_examples():
    basis = monomial_basis(8, 4)
    vals = np.zeros(len(basis))
    vals[0] = 1.0
    m = MomentVector(vals, basis)
    assert moment_bound_check(m) <= 0
    e = [0] * 8
    e[0] = 4
    vals[basis.lookup(tuple(e))] = 17.0
    assert moment_bound_check(MomentVector(vals, basis)) == pytest.approx(13.0)


def test_dirac_moments_and_flatness():
    basis = monomial_basis(8, 4)
    x = np.array([0.6, 0.8j])
    y = np.array([1, 1]) / np.sqrt(2)
    m = dirac_moments(basis, embed(x, y))
    rep = flatness_report(m, 2)
    assert rep.ranks == ((1, 1), (2, 1))
    assert rep.flat
    f = realify(cost_complex(FROB, 2))
    coef = np.zeros(len(basis))
    for mon, c in f.terms.items():
        coef[basis.lookup(mon)] = c
    assert coef @ m.values == pytest.approx(eval_real(f, embed(x, y)))


def test_flatness_observed_on_reference_instances():
    # the phase symmetry x -> e^{i theta} x makes interior-point solutions
    # maximal-rank, so even the pure instance does not report a single atom
    rep = flatness_report(solved("pure")[2], 2)
    assert rep.ranks[0][1] > 1
    mixed = flatness_report(solved("mixed")[2], 2)
    assert [s for s, _ in mixed.ranks] == [1, 2]
    assert mixed.as_dict()["ranks"].keys() == {"1", "2"}


def test_singular_marginal_closed_form():
    # with nu = vv* pure, every plan pairs x with v, so the frobenius value is 2 - 2 v* rho v
    rho = validate_state(np.diag([0.7, 0.3]))
    v = np.array([0.6, 0.8j])
    nu = validate_state(np.outer(v, v.conj()))
    rel = build_relaxation(rho, nu, 2)
    assert rel.range_rows == 2 * comb(8 + 3, 3)
    lower, _, sol = solve_relaxation(rel)
    assert lower == pytest.approx(2 - 2 * (v.conj() @ rho.mat @ v).real, abs=1e-7)
    w = dual_witness(rel, sol, "trace-gamma-zero")
    assert w.x_range is None and w.y_range.shape == (2, 1)
    assert abs(w.certified_value - lower) <= 1e-6
    assert sample_dual_feasibility(w, FROB, 5000, seed=0) >= -1e-6
    assert w.shifted(2.0, rho, nu).y_range is w.y_range


def test_range_rows_only_for_singular_states():
    assert build_relaxation(*states("mixed"), 2).range_rows == 0
    rel = build_relaxation(*states("pure"), 2)
    assert rel.range_rows == 4 * comb(8 + 3, 3)
    off = build_relaxation(*states("pure"), 2, range_rows=False)
    assert off.range_rows == 0
    assert off.problem.num_rows == rel.problem.num_rows - rel.range_rows
    # all range rows vanish on the moments of the exact optimal plan
    m = dirac_moments(rel.basis_2t, embed(np.array([1.0, 0.0]), np.array([1.0, 1.0]) / np.sqrt(2)))
    p = rel.problem
    assert np.max(np.abs((p.b - p.A @ m.values)[: p.cones[0].dim])) <= 1e-12


def test_without_range_rows_solver_failure_is_reported():
    # a pure state against a mixed one: no attained dual without range rows
    rel = build_relaxation(*states("random2"), 2, range_rows=False)
    with pytest.raises(SolverFailed):
        solve_relaxation(rel)
    lower, _, _ = solve_relaxation(build_relaxation(*states("random2"), 2))
    assert lower <= plan_cost(product_plan(*states("random2"))) + 1e-6
