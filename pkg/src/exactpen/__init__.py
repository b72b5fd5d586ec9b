"""Exact L^p penalty reduction of free-endpoint trajectory problems.

The package turns ODE-constrained and set-valued (differential-inclusion)
free-endpoint problems into unconstrained minimization over the derivative
samples of the trajectory, solves them with projected spectral gradient
descent under penalty continuation, and computes the verifiable constants
(Lipschitz estimate, descent rate, threshold ``lambda_star``) that justify
when the penalized and original problems coincide.
"""

__version__ = "0.1.0"

from .errors import (
    CapabilityError,
    CatalogKeyError,
    ConfigError,
    EvaluationError,
    InvalidArgumentError,
    NondifferentiablePointError,
)
from .model import (
    ControlSetModel,
    Grid,
    InclusionProblemSpec,
    ProblemSpec,
    ResidualField,
    Trajectory,
    euler_feasible_trajectory,
    lp_norm,
    make_uniform_grid,
    reconstruct_states,
    residual,
)
from .functionals import (
    GradientPair,
    H_map,
    PenaltyConfig,
    eval_Phi,
    eval_Psi,
    eval_objective,
    eval_penalty,
    grad_Phi,
    grad_objective,
    grad_penalty,
)
from .inclusion import (
    SupportSetModel,
    eval_inclusion_penalty,
    grad_inclusion_penalty,
    inclusion_distance,
    support_grad_x,
    support_value,
)
from .certificates import (
    ExactnessCertificate,
    GronwallBound,
    GrowthFit,
    PlateauReport,
    Region,
    ResolventCheck,
    build_certificate,
    coercive_lower_bound,
    conjugate_exponent,
    descent_rate_bound,
    exactness_plateau_experiment,
    gronwall_sublevel_bound,
    growth_condition_fit,
    kernel_bound_estimate,
    lambda_star_bound,
    lipschitz_estimate,
    resolvent_bound_check,
    resolvent_bound_omega,
)
from .solver import (
    Solution,
    SolverConfig,
    default_trajectory,
    feasibility_restore,
    minimize_Phi,
    minimize_at_lambda,
    penalty_continuation,
    project_control,
)
from .catalog import catalog_get, catalog_list

__all__ = [
    "CapabilityError",
    "CatalogKeyError",
    "ConfigError",
    "ControlSetModel",
    "EvaluationError",
    "ExactnessCertificate",
    "GradientPair",
    "Grid",
    "GronwallBound",
    "GrowthFit",
    "H_map",
    "InclusionProblemSpec",
    "InvalidArgumentError",
    "NondifferentiablePointError",
    "PenaltyConfig",
    "PlateauReport",
    "ProblemSpec",
    "Region",
    "ResidualField",
    "ResolventCheck",
    "Solution",
    "SolverConfig",
    "SupportSetModel",
    "Trajectory",
    "build_certificate",
    "catalog_get",
    "catalog_list",
    "coercive_lower_bound",
    "conjugate_exponent",
    "default_trajectory",
    "descent_rate_bound",
    "euler_feasible_trajectory",
    "eval_Phi",
    "eval_Psi",
    "eval_inclusion_penalty",
    "eval_objective",
    "eval_penalty",
    "exactness_plateau_experiment",
    "feasibility_restore",
    "grad_Phi",
    "grad_inclusion_penalty",
    "grad_objective",
    "grad_penalty",
    "gronwall_sublevel_bound",
    "growth_condition_fit",
    "inclusion_distance",
    "kernel_bound_estimate",
    "lambda_star_bound",
    "lipschitz_estimate",
    "lp_norm",
    "make_uniform_grid",
    "minimize_Phi",
    "minimize_at_lambda",
    "penalty_continuation",
    "project_control",
    "reconstruct_states",
    "residual",
    "resolvent_bound_check",
    "resolvent_bound_omega",
    "support_grad_x",
    "support_value",
]
