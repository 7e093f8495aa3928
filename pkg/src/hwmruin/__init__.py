"""Robust ruin-minimization with high-watermark fee drag: HJB solver,
closed-form benchmarks, Monte Carlo simulator, and verification checks."""

from .backend import backend_name, set_worker_threads, using_numba
from .model import (
    DerivedParams,
    ModelParams,
    PiBox,
    ThetaSet,
    control_drift,
    diffusion_matrix,
    fee_face_operator,
    frictionless_policy,
    frictionless_value,
    hamiltonian,
    inner_sup_theta,
    kappa_exponent,
    no_invest_value,
    validate_params,
)
from .simulate import (
    CallablePolicy,
    ConstantPolicy,
    ObjectiveEstimate,
    PathState,
    SimConfig,
    Status,
    TablePolicy,
    Trajectory,
    WatermarkReport,
    estimate_objective,
    euler_step,
    path_seeds,
    sample_default_times,
    simulate_path,
    watermark_report,
)
from .solver import (
    BoundaryReport,
    Grid,
    HJBSolution,
    PolicyField,
    ResidualReport,
    SolveReport,
    SolverConfig,
    assemble_residual,
    boundary_residuals,
    build_grid,
    default_y_max,
    extract_policy,
    howard_solve,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "backend_name",
    "set_worker_threads",
    "using_numba",
    "ModelParams",
    "DerivedParams",
    "validate_params",
    "kappa_exponent",
    "frictionless_value",
    "frictionless_policy",
    "no_invest_value",
    "control_drift",
    "diffusion_matrix",
    "inner_sup_theta",
    "hamiltonian",
    "fee_face_operator",
    "ThetaSet",
    "PiBox",
    "Grid",
    "build_grid",
    "default_y_max",
    "SolverConfig",
    "SolveReport",
    "HJBSolution",
    "PolicyField",
    "ResidualReport",
    "BoundaryReport",
    "howard_solve",
    "assemble_residual",
    "boundary_residuals",
    "extract_policy",
    "Status",
    "SimConfig",
    "PathState",
    "Trajectory",
    "ConstantPolicy",
    "TablePolicy",
    "CallablePolicy",
    "ObjectiveEstimate",
    "WatermarkReport",
    "estimate_objective",
    "simulate_path",
    "euler_step",
    "path_seeds",
    "sample_default_times",
    "watermark_report",
]
