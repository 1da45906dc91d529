import functools
import sys
from pathlib import Path

import numpy as np
import pytest

from qwasserstein.conic import SolverOptions
from qwasserstein.momentsdp import build_relaxation, dual_witness, solve_relaxation
from qwasserstein.polycore import CostConvention
from qwasserstein.states import random_density, validate_state

PURE = (np.diag([1.0, 0.0]), 0.5 * np.ones((2, 2)))
MIXED = (np.diag([0.75, 0.25]), 0.5 * np.eye(2))
SATURATION = (0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]]), 0.5 * np.ones((2, 2)))
REFERENCE = {"pure": PURE, "mixed": MIXED, "saturation": SATURATION}
DATA = Path(__file__).resolve().parents[1] / "data"


def random_pair(seed):
    """Seeded qubit pair with ranks cycling through {1, 2} x {1, 2}."""
    r1 = 1 + seed % 2
    r2 = 1 + (seed // 2) % 2
    return random_density(2, r1, 1000 + seed), random_density(2, r2, 2000 + seed)


def states(name):
    if name.startswith("random"):
        return random_pair(int(name[len("random"):]))
    rho, nu = REFERENCE[name]
    return validate_state(rho), validate_state(nu)


@functools.lru_cache(maxsize=None)
def solved(name, t=2, conv="frobenius"):
    """``(rel, lower, moments, sol)`` for a named pair; cached across the session."""
    rho, nu = states(name)
    rel = build_relaxation(rho, nu, t, CostConvention.parse(conv))
    lower, m, sol = solve_relaxation(rel, SolverOptions())
    return rel, lower, m, sol


def witness(name, t=2, conv="frobenius", gauge="none"):
    rel, _, _, sol = solved(name, t, conv)
    return dual_witness(rel, sol, gauge)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
