"""Perfect Bayesian equilibria of the two-population misbehavior inspection game."""

from .cost_model import (
    AssumptionReport,
    MisbehaviorStrategy,
    Mm1CostParams,
    ServerCost,
    TrafficEnvironment,
    check_assumptions,
    cost_high,
    cost_low,
    delta_c,
    inverse_delta_c,
)
from .equilibrium import (
    NO_INSPECTION_EVER,
    BestResponse,
    Equilibrium,
    Regime,
    SweepTable,
    classify_regime,
    misbehavior_threshold,
    operator_best_response,
    solve_pbe,
    sweep,
)
from .errors import (
    AssumptionViolation,
    BoundaryParameters,
    InspectionGameError,
    InternalConsistencyError,
    LUnstable,
    NotMonotone,
    TargetAboveMax,
    TargetBelowMin,
    UnstableQueue,
)
from .game import (
    AgentUtilities,
    Belief,
    GameParams,
    OperatorStrategy,
    PbeReport,
    StrategyProfile,
    agent_utilities,
    bayes_update,
    check_pbe,
    operator_utilities,
)
from .verification import best_response_iterate, grid_search_pbe, simulate_mm1

__version__ = "0.1.0"
