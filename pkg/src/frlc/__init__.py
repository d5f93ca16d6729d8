"""Low-rank optimal transport through latent coupling factorizations.

The central object is the factor triple (Q, R, T): two thin sub-couplings and
a small latent coupling whose rescaled product Q·diag(1/g_Q)·T·diag(1/g_R)·Rᵀ
is the transport plan. :func:`frlc_solve` fits the triple by coordinate
mirror descent for linear, quadratic, and blended objectives under balanced,
unbalanced, and one-sided marginal constraints, without ever materializing
the n×m plan. Supporting modules cover the scaling projections, gradient
kernels, desk-scale ground-truth oracles, dataset generators, and a batch
CLI (``frlc`` or ``python -m frlc``).
"""

from .analysis import (
    Barycenters,
    diagonalize,
    lc_project,
    numeric_nonneg_rank_upper,
    optimal_g,
    rank_bound,
)
from .datasets import (
    GraphSpec,
    PointCloud,
    adjacency_cost,
    cost_euclidean,
    cost_sqeuclidean_factored,
    gen_gaussian_mixture,
    gen_moons_gaussians,
    gen_roots_of_unity,
    heat_kernel_cost,
    load_graph,
    load_point_cloud,
    node_weights,
    save_point_cloud,
    template_weights,
)
from .errors import (
    DegenerateMarginal,
    DimMismatch,
    FrlcError,
    InvalidRank,
    IsolatedNodeWarning,
    MissingIntraCost,
    NegativeOmega,
    NonPositiveKernel,
    NotConverged,
    ParseError,
    ShapeMismatch,
    TooLarge,
)
from .lc_core import (
    CostSpec,
    LcFactors,
    ProblemSpec,
    apply_plan,
    apply_plan_t,
    marginal_residuals,
    primal_cost,
    reconstruct_plan,
    uniform_marginal,
)
from .matio import load_matrix, load_vector, save_matrix, save_vector
from .objectives import (
    GradientTriple,
    assemble_kernels,
    grad_fgw,
    grad_gw,
    grad_w,
    gw_cost,
    step_size,
)
from .oracle import ExactResult, brute_gw_cost, entropic_reference, exact_ot_uniform
from .projections import (
    ScalingResult,
    sinkhorn,
    sr_left_projection,
    sr_right_projection,
    unbalanced_projection,
)
from .solver import SolveReport, frlc_solve, initialize_couplings, rank2_init

__version__ = "0.1.0"

__all__ = [
    "Barycenters",
    "CostSpec",
    "DegenerateMarginal",
    "DimMismatch",
    "ExactResult",
    "FrlcError",
    "GradientTriple",
    "GraphSpec",
    "InvalidRank",
    "IsolatedNodeWarning",
    "LcFactors",
    "MissingIntraCost",
    "NegativeOmega",
    "NonPositiveKernel",
    "NotConverged",
    "ParseError",
    "PointCloud",
    "ProblemSpec",
    "ScalingResult",
    "ShapeMismatch",
    "SolveReport",
    "TooLarge",
    "adjacency_cost",
    "apply_plan",
    "apply_plan_t",
    "assemble_kernels",
    "brute_gw_cost",
    "cost_euclidean",
    "cost_sqeuclidean_factored",
    "diagonalize",
    "entropic_reference",
    "exact_ot_uniform",
    "frlc_solve",
    "gen_gaussian_mixture",
    "gen_moons_gaussians",
    "gen_roots_of_unity",
    "grad_fgw",
    "grad_gw",
    "grad_w",
    "gw_cost",
    "heat_kernel_cost",
    "initialize_couplings",
    "lc_project",
    "load_graph",
    "load_matrix",
    "load_point_cloud",
    "load_vector",
    "marginal_residuals",
    "node_weights",
    "numeric_nonneg_rank_upper",
    "optimal_g",
    "primal_cost",
    "rank2_init",
    "rank_bound",
    "reconstruct_plan",
    "save_matrix",
    "save_point_cloud",
    "save_vector",
    "sinkhorn",
    "sr_left_projection",
    "sr_right_projection",
    "step_size",
    "template_weights",
    "unbalanced_projection",
    "uniform_marginal",
    "__version__",
]
