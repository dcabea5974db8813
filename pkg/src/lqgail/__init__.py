"""Adversarial imitation learning for linear quadratic regulators.

Alternating minimax solver (gain descent / projected cost ascent), a Riccati
oracle for expert and optimal gains, stepsize admissibility checks, runtime
convergence diagnostics, and model-free gradient/covariance estimators.
"""

from .errors import (
    ConfigError,
    ContractError,
    EstimatorRejectionError,
    InstabilityError,
    InsufficientCoverageError,
    LqgailError,
    NotStabilizableError,
    NumericalFailureError,
    UnsupportedError,
)
from .lqr_core import (
    ClosedLoopSolution,
    CostParam,
    LqrInstance,
    Policy,
    cost,
    gain_residual,
    is_stabilizing,
    policy_gradient,
    solve_closed_loop,
    solve_discrete_lyapunov,
    spectral_radius,
    visitation_moments,
)
from .numerics import DEFAULT_NUMERICS, NumericsConfig
from .riccati import (
    RiccatiSolution,
    check_jacobian_regularity,
    expert_policy,
    riccati_jacobian,
    riccati_residual,
    solve_dare,
)
from .solver import (
    IterateTrace,
    ProximalGradient,
    QuadraticRegularizer,
    SolveResult,
    SolverConfig,
    ThetaBox,
    grad_theta_m,
    objective_m,
    project_theta,
    proximal_gradient,
    solve,
    step,
)
from .conditions import (
    ConditionConstants,
    auto_stepsizes,
    check_condition1,
    check_condition2,
    check_condition3,
    check_condition5,
    compute_constants,
    default_region_bound,
    estimate_lipschitz,
    estimate_local_moduli,
    upsilon_formula,
)
from .diagnostics import (
    cost_update_inequalities,
    gamma_budget_check,
    geometric_inequality_suite,
    local_rate,
    potential_trace,
    prox_decay_slope,
    stability_envelope,
)
from .estimators import (
    EstimatorConfig,
    es_gradient,
    partial_lyapunov_sum,
    rollout_sigma,
)

__version__ = "0.1.0"
