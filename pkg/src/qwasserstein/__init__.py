"""Bounds on the order-2 quantum Wasserstein distance between density matrices.

Lower bounds come from the moment relaxation over the real bi-sphere
(:mod:`qwasserstein.momentsdp`); upper bounds come from explicit transport
plans (:mod:`qwasserstein.plans`).
"""
from .errors import QWError
from .momentsdp import Gauge, build_relaxation, dual_witness, solve_relaxation
from .plans import TransportPlan, check_plan, lp_upper_bound, plan_cost, product_plan
from .polycore import CostConvention
from .states import DensityMatrix, project_to_state, validate_state

__version__ = "0.1.0"

__all__ = [
    "CostConvention",
    "DensityMatrix",
    "Gauge",
    "QWError",
    "TransportPlan",
    "build_relaxation",
    "check_plan",
    "dual_witness",
    "lp_upper_bound",
    "plan_cost",
    "product_plan",
    "project_to_state",
    "solve_relaxation",
    "validate_state",
]
