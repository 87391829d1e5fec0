"""Hybridizable DG solver for convection-dominated diffusion on triangles."""

__version__ = "0.1.0"

from .hdg import METHODS, HdgSolution, get_method, solve_hdg, trace_matrix  # noqa: E402
from .mesh import Mesh, check_mesh_assumption, structured_unit_square, uniform_refine  # noqa: E402
from .problems import (TAU1, TAU2, ProblemSpec, StabilizationSpec, VelocityField,  # noqa: E402
                       builtin_problem, validate_tau)

__all__ = [
    "METHODS", "HdgSolution", "get_method", "solve_hdg", "trace_matrix",
    "Mesh", "check_mesh_assumption", "structured_unit_square", "uniform_refine",
    "TAU1", "TAU2", "ProblemSpec", "StabilizationSpec", "VelocityField", "builtin_problem", "validate_tau",
]
