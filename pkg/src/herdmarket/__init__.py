"""Event-driven agent-based market simulator with herding dynamics, its
large-market diffusion/ODE limits, closed-form stationary analysis, and
convergence-rate experiments."""

__version__ = "0.1.0"

from .analytics import (
    EnsembleSummary,
    RegimeReport,
    classify_regime,
    convergence_regression,
    reproduce_figure,
    summarize_ensemble,
)
from .coefficients import (
    CoefficientSet,
    coefficient_convergence_check,
    finite_coefficients,
    limit_coefficients,
    monte_carlo_moment_check,
)
from .engine import (
    AgentBehavior,
    EventRecord,
    EventStreams,
    MarketSnapshot,
    ModelSpec,
    PricingRule,
    ScalingExponents,
    SignalLaw,
    StateSpace,
    Trajectory,
    action_probabilities,
    aggregated_propensities,
    character_step_probabilities,
    compute_character,
    execute_trade,
    execute_transition,
    sample_intra_action_time,
    simulate_trajectory,
)
from .errors import (
    ConfigError,
    DivergedError,
    EventBudgetError,
    FrozenMarketError,
    HerdMarketError,
    MomentsUnavailableError,
)
from .integrators import (
    BrownianGrid,
    OdeProblem,
    Path,
    SdeProblem,
    integrate_ode,
    integrate_sde,
    rate_comparison,
    sup_distance_to_path,
)
from .lux import (
    LuxExtendedParams,
    LuxPureParams,
    StationaryDistribution,
    build_extended,
    build_pure,
    convergence_constant,
    equilibria,
    gamma_threshold,
    occupation_histogram,
    simulate_extended,
    simulate_extended_sde,
    simulate_pure,
    stationary_distribution,
    tanh_fixed_point,
)
