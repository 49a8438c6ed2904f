"""Estimation and inference for linear programs with estimated parameters."""

from .linalg import (
    LpParams,
    LpSolution,
    solve_lp,
    enumerate_vertices,
    smallest_singular_value,
    inverse_vectorize,
    vectorize,
    OPTIMAL,
    INFEASIBLE,
    UNBOUNDED,
)
from .estimators import (
    PenaltyConfig,
    plug_in_value,
    penalty_value,
    debiased_estimate,
    set_expansion_value,
    default_kappa_n,
    tao_vu_quantile,
    select_penalty,
    select_v_bar,
)
from .geometry import (
    Polytope,
    delta_condition,
    polytope_condition_number,
    l1_violation,
    distance_to_polytope,
    check_a1,
)
from .inference import (
    ThetaEstimate,
    InferenceConfig,
    InferenceResult,
    run_inference,
    combine_two_sided,
    split_sample,
    find_triplet,
    asymptotic_variance,
    bootstrap_se,
)
from .aicm import (
    ConditionalMomentTable,
    AssumptionSpec,
    MeanPotential,
    ATE,
    ingest_sample,
    read_microdata_csv,
    compile,
    bound_value,
    cmivw_bounds,
    ets_estimate,
    alpha_allocation,
    bootstrap_theta_covariance,
)
from .montecarlo import (
    SimulationScenario,
    SimulationReport,
    run_consistency,
    run_inference_study,
    run_uniform_grid,
)

__all__ = [
    "LpParams",
    "LpSolution",
    "solve_lp",
    "enumerate_vertices",
    "smallest_singular_value",
    "inverse_vectorize",
    "vectorize",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
    "PenaltyConfig",
    "plug_in_value",
    "penalty_value",
    "debiased_estimate",
    "set_expansion_value",
    "default_kappa_n",
    "tao_vu_quantile",
    "select_penalty",
    "select_v_bar",
    "Polytope",
    "delta_condition",
    "polytope_condition_number",
    "l1_violation",
    "distance_to_polytope",
    "check_a1",
    "ThetaEstimate",
    "InferenceConfig",
    "InferenceResult",
    "run_inference",
    "combine_two_sided",
    "split_sample",
    "find_triplet",
    "asymptotic_variance",
    "bootstrap_se",
    "ConditionalMomentTable",
    "AssumptionSpec",
    "MeanPotential",
    "ATE",
    "ingest_sample",
    "read_microdata_csv",
    "compile",
    "bound_value",
    "cmivw_bounds",
    "ets_estimate",
    "alpha_allocation",
    "bootstrap_theta_covariance",
    "SimulationScenario",
    "SimulationReport",
    "run_consistency",
    "run_inference_study",
    "run_uniform_grid",
]

__version__ = "0.1.0"
