"""Numerical laboratory for stubborn-agent deliberation dynamics.

Simulates multi-agent belief updates where each agent mixes an innate
belief, its own current belief, and a weighted average of its peers;
recovers those parameters from observed trajectories; and checks
routing/aggregation theory on synthetic scenarios with closed-form
answers.  See the README for the update rule and the file formats.
"""

from .constants import (
    CONSENSUS_THRESHOLD,
    CONTRACTION_MARGIN,
    ENTROPY_EPS,
    INGEST_TOL,
    LOG_FLOOR,
    STOCHASTIC_TOL,
    TAU_SIMPLEX,
)
from .dynamics import (
    aggregate_pi,
    build_h,
    equilibrium,
    fj_step,
    influence_weights,
    settle,
    simulate,
    spectral_radius,
)
from .errors import (
    FJLabError,
    NumericalError,
    ValidationError,
)
from .estimation import (
    FitConfig,
    FitReport,
    VariabilityReport,
    fit_global,
    fit_objective,
    fit_sample,
    one_step_predictions,
    parameter_variability,
)
from .io import (
    load_trajectories,
    params_from_dict,
    params_to_dict,
    save_trajectories,
)
from .metrics import (
    AgentMetricRow,
    SystemMetricRow,
    alignment_metrics,
    brier_loss,
    competence,
    confidence,
    confidence_metrics,
    disagreement,
    diversity,
    influence_metrics,
    log_loss,
    softmax_weights,
    spearman,
    trajectory_metrics,
)
from .model import (
    AggregationWeights,
    DeliberationTrajectory,
    FJParameters,
    argmax_label,
    normalize_belief,
    validate_belief,
    validate_snapshot,
)
from .routing import (
    ConfidenceRoutingReport,
    EnsembleComparisonReport,
    LabeledSnapshotSet,
    RoutingReport,
    ambiguity_decomposition,
    confidence_routing_vs_ensemble,
    confidence_softmax_router,
    constant_router,
    ensemble_waste,
    fj_influence_router,
    hard_confidence_router,
    local_risk,
    moe_vs_best_single,
    moe_vs_fixed_ensemble,
    oracle_min_risk_router,
    routing_regret,
    uniform_router,
)
from .scenarios import (
    ExclusiveLosses,
    ExclusiveScenario,
    ImperfectScenario,
    empirical_route_crossover,
    exclusive_losses,
    gen_exclusive,
    gen_imperfect,
    imperfect_gap,
    moe_advantage_check,
    optimal_fixed_ensemble,
    project_simplex,
    route_loss,
    routing_error_threshold,
    uniform_mixture_profile,
    wrong_majority_holds,
)
from .verify import (
    CheckResult,
    DEFAULT_CHECKS,
    run_all_checks,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # constants
    "CONSENSUS_THRESHOLD",
    "CONTRACTION_MARGIN",
    "ENTROPY_EPS",
    "INGEST_TOL",
    "LOG_FLOOR",
    "STOCHASTIC_TOL",
    "TAU_SIMPLEX",
    # model
    "AggregationWeights",
    "DeliberationTrajectory",
    "FJParameters",
    "argmax_label",
    "normalize_belief",
    "validate_belief",
    "validate_snapshot",
    # dynamics
    "aggregate_pi",
    "build_h",
    "equilibrium",
    "fj_step",
    "influence_weights",
    "settle",
    "simulate",
    "spectral_radius",
    # metrics
    "AgentMetricRow",
    "SystemMetricRow",
    "alignment_metrics",
    "brier_loss",
    "competence",
    "confidence",
    "confidence_metrics",
    "disagreement",
    "diversity",
    "influence_metrics",
    "log_loss",
    "softmax_weights",
    "spearman",
    "trajectory_metrics",
    # routing
    "ConfidenceRoutingReport",
    "EnsembleComparisonReport",
    "LabeledSnapshotSet",
    "RoutingReport",
    "ambiguity_decomposition",
    "confidence_routing_vs_ensemble",
    "confidence_softmax_router",
    "constant_router",
    "ensemble_waste",
    "fj_influence_router",
    "hard_confidence_router",
    "local_risk",
    "moe_vs_best_single",
    "moe_vs_fixed_ensemble",
    "oracle_min_risk_router",
    "routing_regret",
    "uniform_router",
    # scenarios
    "ExclusiveLosses",
    "ExclusiveScenario",
    "ImperfectScenario",
    "empirical_route_crossover",
    "exclusive_losses",
    "gen_exclusive",
    "gen_imperfect",
    "imperfect_gap",
    "moe_advantage_check",
    "optimal_fixed_ensemble",
    "project_simplex",
    "route_loss",
    "routing_error_threshold",
    "uniform_mixture_profile",
    "wrong_majority_holds",
    # estimation
    "FitConfig",
    "FitReport",
    "VariabilityReport",
    "fit_global",
    "fit_objective",
    "fit_sample",
    "one_step_predictions",
    "parameter_variability",
    # io
    "load_trajectories",
    "params_from_dict",
    "params_to_dict",
    "save_trajectories",
    # verify
    "CheckResult",
    "DEFAULT_CHECKS",
    "run_all_checks",
    # errors
    "FJLabError",
    "NumericalError",
    "ValidationError",
]
