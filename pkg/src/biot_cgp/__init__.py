"""Continuous Galerkin-Petrov space-time finite elements for the dynamic Biot model.

Displacement, velocity and seepage flux live in BDM_{l+1} (H(div)-conforming,
with a symmetric interior-penalty treatment of tangential jumps), the
pressure in discontinuous P_l.  Time is discretised by cGP(k) slabs.
"""

from .assembly import OperatorSet, build_operators
from .errors import ErrorReport, eoc, linf_l2_error, measure_errors
from .mesh import Mesh, refine_uniform, refined_mesh, unit_square_mesh
from .mms import ManufacturedSolution, default_parameters
from .parameters import ModelParameters
from .spaces import FESpace, build_space
from .timestepping import SlabSolver, TimeMesh, Trajectory, energy, initial_state, run

__all__ = [
    "ErrorReport",
    "FESpace",
    "ManufacturedSolution",
    "Mesh",
    "ModelParameters",
    "OperatorSet",
    "SlabSolver",
    "TimeMesh",
    "Trajectory",
    "build_operators",
    "build_space",
    "default_parameters",
    "energy",
    "eoc",
    "initial_state",
    "linf_l2_error",
    "measure_errors",
    "refine_uniform",
    "refined_mesh",
    "run",
    "unit_square_mesh",
]
