from .backends import BACKENDS, register_backend, solve
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
    smat,
    structurally_equal,
    svec,
    svec_index,
    svec_pairs,
)
from .sdpa import export_sdpa, parse_sdpa

__all__ = [
    "BACKENDS",
    "ConicProblem",
    "KKTResiduals",
    "NonNegCone",
    "PSDCone",
    "Solution",
    "SolverOptions",
    "SolverStatus",
    "ZeroCone",
    "export_sdpa",
    "parse_sdpa",
    "register_backend",
    "residuals",
    "smat",
    "solve",
    "structurally_equal",
    "svec",
    "svec_index",
    "svec_pairs",
]
