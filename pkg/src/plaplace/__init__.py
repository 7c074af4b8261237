"""Numerical workbench for degenerate p-Laplacian Neumann problems on rectangles.

The package discretizes the weighted homogeneous Neumann problem for the
degenerate p-Laplacian on a staggered rectangle grid, solves it by convex
energy minimization, estimates weighted Poincare constants, audits
Muckenhoupt-type weight conditions, and cross-checks the two constructions
against each other and against a cosine-series oracle.
"""

from .grid import (
    Grid,
    GridFunction,
    RectDomain,
    VectorField,
    cell_average,
    checkerboard_mode,
    gradient,
    lp_norm,
    project_mean_zero,
    vector_lp_norm,
    weighted_mean,
)
from .matrix_weight import (
    EllipticityReport,
    MatrixWeightField,
    eigendecompose,
    eigensum_identity_check,
    ellipticity_audit,
    lq_norm,
    matrix_power,
    operator_norm,
)
from .weights import (
    Ball,
    Box,
    ScalarWeightField,
    WeightAuditReport,
    admissible_pair_check,
    ap_constant,
    balance_check,
    doubling_constant,
    eval_weight,
)
from .spectral import (
    CosineExpansion,
    cosine_coeffs,
    l2_bound_check,
    lambda_mn,
    solve_poisson_neumann_rect,
)
from .solver import (
    NeumannProblem,
    SobolevPair,
    SolveReport,
    SolverConfig,
    apply_gamma,
    apply_t,
    check_hemicontinuous,
    check_monotone,
    coercivity_threshold,
    energy,
    residual,
    solve,
    verify_regularity,
)
from .poincare import (
    PoincareEstimate,
    poincare_from_neumann,
    poincare_p2_eigen,
    poincare_rayleigh_max,
    riesz_pointwise_check,
    riesz_potential,
    two_weight_chain_check,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
