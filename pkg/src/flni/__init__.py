"""Fused lasso nearly-isotonic signal approximation on order graphs."""

from .estimators import (
    FitResult,
    fit_flni,
    fit_fni,
    fit_fused_lasso,
    fit_fusion,
    fit_nearly_isotonic,
    fit_sparse_fused_lasso,
    objective,
    positive_part,
    shift_for_ni_relation,
    soft_threshold,
)
from .graph import (
    GraphError,
    IncidenceMatrix,
    OrderGraph,
    build_chain_graph,
    build_grid_graph,
    from_edge_list,
    incidence_matrix,
    validate_acyclic,
)
from .model_select import (
    GroupPartition,
    PathResult,
    cp_statistic,
    df_flni,
    df_fni,
    estimate_sigma2_mad,
    fused_groups,
    sweep_path,
)
from .solver import Algorithm, DualSolution, Penalties, SolverOptions, recover_primal, solve_dual

__version__ = "0.1.0"
