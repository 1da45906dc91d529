import dataclasses

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from qwasserstein.conic import (
    ConicProblem,
    NonNegCone,
    PSDCone,
    SolverOptions,
    SolverStatus,
    ZeroCone,
    export_sdpa,
    parse_sdpa,
    residuals,
    smat,
    solve,
    structurally_equal,
    svec,
    svec_index,
    svec_pairs,
)
from qwasserstein.conic import backends
from qwasserstein.errors import DimensionMismatch, MalformedProblem, ParseError, UnsupportedCone

from conftest import solved

R2 = np.sqrt(2)


def trace_problem():
    """min Tr Z s.t. Z11 + Z22 = 1, Z PSD 2x2; z = svec(Z) = (Z11, sqrt2 Z12, Z22)."""
    c = np.array([1.0, 0.0, 1.0])
    A = sp.csc_matrix(np.vstack([[1.0, 0.0, 1.0], -np.eye(3)]))
    b = np.array([1.0, 0, 0, 0])
    return ConicProblem(c, A, b, (ZeroCone(1), PSDCone(2)))


def completion_problem():
    """min -(Z12 + Z21) s.t. diag Z = 1, Z PSD."""
    c = np.array([0.0, -R2, 0.0])
    A = sp.csc_matrix(np.vstack([[1.0, 0, 0], [0, 0, 1.0], -np.eye(3)]))
    b = np.array([1.0, 1.0, 0, 0, 0])
    return ConicProblem(c, A, b, (ZeroCone(2), PSDCone(2)))


def lp_problem():
    """min x s.t. x >= 3, as -x + s = -3, s >= 0."""
    return ConicProblem([1.0], sp.csc_matrix([[-1.0]]), [-3.0], (NonNegCone(1),))


def test_svec_roundtrip():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((4, 4))
    M = M + M.T
    v = svec(M)
    assert len(v) == 10
    assert np.allclose(smat(v), M)
    # inner product is preserved
    N = rng.standard_normal((4, 4))
    N = N + N.T
    assert svec(M) @ svec(N) == pytest.approx(np.trace(M @ N))
    assert [svec_index(i, j) for i, j in svec_pairs(4)] == list(range(10))
    with pytest.raises(DimensionMismatch):
        smat(np.ones(4), 2)


@pytest.mark.parametrize("backend", ["cvxopt", "clarabel"])
def test_trace_example(backend):
    sol = solve(trace_problem(), SolverOptions(backend=backend))
    assert sol.status is SolverStatus.OPTIMAL
    assert sol.primal_obj == pytest.approx(1.0, abs=1e-8)
    Z = smat(sol.z)
    assert np.linalg.eigvalsh(Z)[0] >= -1e-8


@pytest.mark.parametrize("backend", ["cvxopt", "clarabel"])
def test_lp_example(backend):
    sol = solve(lp_problem(), SolverOptions(backend=backend))
    assert sol.optimal
    assert sol.primal_obj == pytest.approx(3.0, abs=1e-8)


@pytest.mark.parametrize("backend", ["cvxopt", "clarabel"])
def test_completion_example(backend):
    sol = solve(completion_problem(), SolverOptions(backend=backend))
    assert sol.optimal
    assert sol.primal_obj == pytest.approx(-2.0, abs=1e-7)
    assert np.allclose(smat(sol.z), np.ones((2, 2)), atol=1e-4)


def test_auto_backend_choice():
    assert backends.choose_backend(trace_problem(), SolverOptions()) == "cvxopt"
    assert backends.choose_backend(lp_problem(), SolverOptions()) == "clarabel"
    with pytest.raises(MalformedProblem):
        solve(lp_problem(), SolverOptions(backend="nope"))


def test_infeasible_and_unbounded():
    # x >= 3 and x <= 1
    A = sp.csc_matrix([[-1.0], [1.0]])
    p = ConicProblem([1.0], A, [-3.0, 1.0], (NonNegCone(2),))
    for be in ("cvxopt", "clarabel"):
        assert solve(p, SolverOptions(backend=be)).status is SolverStatus.PRIMAL_INFEASIBLE
    # min x s.t. x <= 1
    q = ConicProblem([1.0], sp.csc_matrix([[1.0]]), [1.0], (NonNegCone(1),))
    for be in ("cvxopt", "clarabel"):
        assert solve(q, SolverOptions(backend=be)).status is SolverStatus.DUAL_INFEASIBLE


@pytest.mark.parametrize("make", [trace_problem, completion_problem, lp_problem])
def test_residual_contract(make):
    p = make()
    sol = solve(p)
    assert sol.optimal
    assert max(sol.kkt) <= 1e-8
    again = residuals(p, sol)
    assert np.max(np.abs(np.array(again) - np.array(sol.kkt))) <= 1e-9
    # weak duality
    assert sol.dual_obj <= sol.primal_obj + 1e-8


def test_residual_perturbation():
    p = trace_problem()
    sol = solve(p)
    bumped = dataclasses.replace(sol, z=sol.z + 1e-3)
    res = residuals(p, bumped)
    assert 1e-4 <= res.primal <= 1e-2
    with pytest.raises(DimensionMismatch):
        residuals(p, dataclasses.replace(sol, z=np.zeros(5)))


def test_zero_problem():
    p = ConicProblem(np.zeros(2), sp.csc_matrix((0, 2)), np.zeros(0), ())
    sol = solve(p)
    assert sol.optimal
    assert tuple(residuals(p, sol)) == (0.0, 0.0, 0.0)


def test_malformed_problems():
    with pytest.raises(MalformedProblem):
        ConicProblem([1.0], sp.csc_matrix([[1.0]]), [1.0, 2.0], (NonNegCone(2),))
    with pytest.raises(MalformedProblem):
        ConicProblem([1.0], sp.csc_matrix([[1.0]]), [1.0], (NonNegCone(2),))
    with pytest.raises(MalformedProblem):
        ConicProblem([1.0], sp.csc_matrix([[1.0]]), [1.0], (NonNegCone(0),))
    with pytest.raises(MalformedProblem):
        ConicProblem([np.nan], sp.csc_matrix([[1.0]]), [1.0], (NonNegCone(1),))
    with pytest.raises(MalformedProblem):
        solve("not a problem")


def test_determinism():
    rel = solved("mixed")[0]
    a = solve(rel.problem)
    b = solve(rel.problem)
    assert a.primal_obj == b.primal_obj
    assert np.array_equal(a.z, b.z)


def test_audit_downgrades_loose_backend():
    # clarabel stalls on the degenerate moment problems; the audit must not call that optimal
    rel = solved("pure")[0]
    sol = solve(rel.problem, SolverOptions(backend="clarabel", tolerance=1e-12))
    assert sol.status is not SolverStatus.OPTIMAL or max(sol.kkt) <= 1e-12


def test_dependent_rows_are_dropped():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [2.0, 2.0], [1.0, -1.0]]))
    assert list(backends._independent_rows(A)) in ([0, 2], [1, 2])
    rel, _, _, sol = solved("mixed")
    assert sol.backend_info["dropped_dependent_equalities"] > 0


def test_structured_kkt_matches_reference():
    """The normal-equation KKT solver agrees with cvxopt's LDL solver for a random scaling."""
    from cvxopt import matrix, misc, solvers

    rel = solved("mixed")[0]
    captured = {}
    real_conelp = solvers.conelp

    def fake(c, G, h, dims, **kw):
        captured.update(G=G, dims=dims, A=kw.get("A"))
        raise RuntimeError("captured")

    real_builder = backends._schur_kktsolver

    def spy(*args):
        captured["args"] = args
        return real_builder(*args)

    solvers.conelp = fake
    backends._schur_kktsolver = spy
    old_min = backends.SCHUR_MIN_SIDE
    backends.SCHUR_MIN_SIDE = 1
    try:
        with pytest.raises(RuntimeError, match="captured"):
            backends._cvxopt(rel.problem, SolverOptions())
    finally:
        solvers.conelp = real_conelp
        backends._schur_kktsolver = real_builder
        backends.SCHUR_MIN_SIDE = old_min

    G, dims, A = captured["G"], captured["dims"], captured["A"]
    side = dims["s"][0]
    rng = np.random.default_rng(0)

    def rand_pd():
        X = rng.standard_normal((side, side))
        return X @ X.T + 0.1 * np.eye(side)

    W = misc.compute_scaling(matrix(rand_pd().ravel(order="F")), matrix(rand_pd().ravel(order="F")),
                             matrix(0.0, (side, 1)), dims)
    ref = misc.kkt_ldl(G, dims, A)(W)
    mine = real_builder(*captured["args"])(W)
    bx = rng.standard_normal(G.size[1])
    by = rng.standard_normal(A.size[0])
    bz = rand_pd().ravel(order="F")
    x1, y1, z1 = matrix(bx), matrix(by), matrix(bz)
    x2, y2, z2 = matrix(bx), matrix(by), matrix(bz)
    ref(x1, y1, z1)
    mine(x2, y2, z2)
    scale = np.max(np.abs(np.array(x1)))
    assert np.max(np.abs(np.array(x1) - np.array(x2))) <= 1e-8 * scale
    assert np.max(np.abs(np.array(y1) - np.array(y2))) <= 1e-8 * scale
    Z1 = np.array(z1).reshape(side, side, order="F")
    Z2 = np.array(z2).reshape(side, side, order="F")
    assert np.max(np.abs(np.tril(Z1) - np.tril(Z2))) <= 1e-8 * scale


# -- SDPA ---------------------------------------------------------------------

def test_sdpa_smallest_lp():
    text = export_sdpa(lp_problem())
    # m, nBlock, block sizes, c; then the constant and the single coefficient entry
    assert text == "1\n1\n-1\n1\n0 1 1 1 3\n1 1 1 1 1\n"
    assert structurally_equal(parse_sdpa(text), lp_problem())


def test_sdpa_equalities_are_tagged():
    text = export_sdpa(trace_problem())
    lines = text.splitlines()
    assert lines[0].startswith('"')
    assert lines[1] == "*cones: Z1 S2"
    assert lines[4] == "-2 2"
    assert structurally_equal(parse_sdpa(text), trace_problem())
    assert text.isascii() and "\r" not in text


def test_sdpa_roundtrip_relaxation():
    rel = solved("pure")[0]
    text = export_sdpa(rel.problem)
    assert export_sdpa(rel.problem) == text
    back = parse_sdpa(text)
    assert structurally_equal(back, rel.problem)
    assert "\n2\n-" in text  # two blocks, the first an LP-style block


def test_sdpa_plain_file_without_tag():
    text = "2\n1\n2\n1 1\n0 1 1 1 1\n1 1 1 1 1\n2 1 2 2 1\n"
    p = parse_sdpa(text)
    assert p.cones == (PSDCone(2),)
    assert np.array_equal(p.c, [1.0, 1.0])


@pytest.mark.parametrize("text, line", [
    ("garbage header\n1\n1\n1\n", 1),
    ("1\n0\n\n1\n", 2),
    ("1\n1\n1\n1\n0 1 1\n", 5),
    ("1\n1\n1\nx\n", 4),
    ("* comment\n1\n1\n-1\n1\n0 1 1 2 1\n", 6),
])
def test_sdpa_parse_errors(text, line):
    with pytest.raises(ParseError) as exc:
        parse_sdpa(text)
    assert exc.value.line == line


def test_sdpa_empty_blocks_list():
    with pytest.raises(ParseError, match="empty blocks"):
        parse_sdpa("1\n0\n\n1\n")


def test_sdpa_unsupported():
    with pytest.raises(UnsupportedCone):
        export_sdpa(ConicProblem(np.zeros(1), sp.csc_matrix((0, 1)), np.zeros(0), ()))


def random_problem(data):
    nvars = data.draw(st.integers(1, 4))
    cones = []
    for _ in range(data.draw(st.integers(1, 3))):
        kind = data.draw(st.sampled_from(["Z", "L", "S"]))
        size = data.draw(st.integers(1, 3))
        cones.append({"Z": ZeroCone, "L": NonNegCone, "S": PSDCone}[kind](size))
    rows = sum(c.size for c in cones)
    vals = st.one_of(st.just(0.0), st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False))
    A = np.array([[data.draw(vals) for _ in range(nvars)] for _ in range(rows)])
    b = np.array([data.draw(vals) for _ in range(rows)])
    c = np.array([data.draw(vals) for _ in range(nvars)])
    return ConicProblem(c, sp.csc_matrix(A), b, tuple(cones))


@settings(max_examples=20, deadline=None)
@given(st.data())
def test_sdpa_roundtrip_random(data):
    p = random_problem(data)
    q = parse_sdpa(export_sdpa(p))
    # sqrt2 scaling of PSD off-diagonals is undone up to one rounding
    assert structurally_equal(q, p, rtol=4e-16)
    assert export_sdpa(q) == export_sdpa(p)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_external_sdpa_solver_cross_check(tmp_path):
    sdpap = pytest.importorskip("sdpap")
    rel = solved("pure")[0]
    path = tmp_path / "pure.dat-s"
    path.write_text(export_sdpa(rel.problem))
    A, b, c, K, J = sdpap.importsdpa(str(path))
    _, _, info, _, _ = sdpap.solve(A, b, c, K, J, {"print": "no"})
    # sdpap reports the SDPA maximization form, i.e. the negated objective
    assert -info["primalObj"] == pytest.approx(1.0, abs=1e-5)
    assert -info["dualObj"] == pytest.approx(1.0, abs=1e-5)
