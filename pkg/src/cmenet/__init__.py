"""Bi-level selection of main effects and conditional main effects (CMEs)
from binary-factor data: design construction, a nonconvex grouped penalty,
a coordinate-descent solver with strong-rule screening, cross-validated
tuning, and a simulation lab."""

from .design import (
    CmeDesign,
    EffectId,
    FactorMatrix,
    build_cme_design,
    cousin_group,
    load_csv,
    parse_effect_name,
    save_csv,
    sibling_group,
)
from .penalty import (
    GroupState,
    PenaltyParams,
    exp_outer,
    group_norm,
    kkt_residual,
    mcp_inner,
    objective,
    slope,
)
from .screening import PathContext, kkt_recheck_and_repair, screen
from .solver import FitState, SolverOptions, fit, fit_extended, lambda_max
from .threshold import threshold
from .tuning import CvGrid, CvResult, cv_cmenet, cv_lasso_limit, default_grid, fit_path
from .simlab import (
    GroupKind,
    LatentModelSpec,
    Scenario,
    TrueModelSpec,
    empirical_group_correlation,
    gen_factors,
    gen_response,
    inconsistency_case,
    irrepresentability_stat,
    misspecification_count,
    run_benchmark,
    theoretical_correlation,
)
from .estimators import CmeDesigner, CmeNetCV, CmeNetRegressor

__version__ = "0.1.0"

__all__ = [
    "CmeDesign", "EffectId", "FactorMatrix", "build_cme_design", "sibling_group",
    "cousin_group", "load_csv", "save_csv", "parse_effect_name",
    "PenaltyParams", "GroupState", "mcp_inner", "exp_outer", "group_norm", "slope",
    "objective", "kkt_residual",
    "threshold",
    "fit", "fit_extended", "FitState", "SolverOptions", "lambda_max",
    "PathContext", "screen", "kkt_recheck_and_repair",
    "CvGrid", "CvResult", "default_grid", "cv_cmenet", "cv_lasso_limit", "fit_path",
    "GroupKind", "LatentModelSpec", "TrueModelSpec", "Scenario",
    "gen_factors", "gen_response", "theoretical_correlation",
    "empirical_group_correlation", "irrepresentability_stat", "inconsistency_case",
    "misspecification_count", "run_benchmark",
    "CmeDesigner", "CmeNetRegressor", "CmeNetCV",
    "__version__",
]
