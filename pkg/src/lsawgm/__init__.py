"""Adaptive least-squares wavelet Galerkin solver for time-periodic parabolic problems.

Modules:
    basis1d      piecewise linear biorthogonal wavelets on the periodic interval,
                 the interval and with homogeneous Dirichlet conditions
    indexset     tensor index sets, multitrees, completion, stable expansions, cones
    assembly     exact 1D entries, diagonal preconditioners, dense reference matrices
    tensorapply  matrix-free application of B and B^T on multitrees
    awgm         CGLS Galerkin solve, residual estimation, bulk chasing, driver
    problems     heat and convection-diffusion-reaction model problems
    cli          experiment runner
"""

from .assembly import OperatorSpec, assemble_dense, cdr_operator, heat_operator, operator_bounds
from .awgm import AwgmParams, IterationRecord, ResidualConstruction, galsolve, ls_awgm, sparse_grid_solve
from .indexset import MultiTree, Variant, complete_to_multitree, is_multitree, sparse_grid_sets
from .problems import cdr_problem, evaluate, heat_problem, l2_error
from .tensorapply import ApplyPlan, apply, apply_transpose

__version__ = "0.1.0"

__all__ = [
    "ApplyPlan", "AwgmParams", "IterationRecord", "MultiTree", "OperatorSpec", "ResidualConstruction", "Variant",
    "apply", "apply_transpose", "assemble_dense", "cdr_operator", "cdr_problem", "complete_to_multitree", "evaluate",
    "galsolve", "heat_operator", "heat_problem", "is_multitree", "l2_error", "ls_awgm", "operator_bounds",
    "sparse_grid_sets", "sparse_grid_solve",
]
