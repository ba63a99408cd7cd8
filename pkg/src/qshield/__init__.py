"""Security game on parallel server queues: simulator, minimax-Q learner,
truncated tabular oracle, drift auditors and evaluation harness."""

__version__ = "0.1.0"

from .evaluate import (
    EvalConfig,
    MetricsReport,
    mc_discounted_cost,
    normalized_mean_cost,
    policy_consistency,
    sample_equilibrium_states,
    weight_interpretation_report,
)
from .features import FeatureBasis
from .game import (
    GameParams,
    TransitionEvent,
    embedded_reward,
    instantaneous_reward,
    marginal_rates,
    next_state_distribution,
    sample_transition,
    validate_params,
)
from .learner import (
    DivergenceError,
    LearningSchedule,
    TrainConfig,
    TrainTrajectory,
    convergence_curve,
    q_value,
    td_error,
    train,
)
from .oracle import (
    TruncatedChain,
    TruncatedSpace,
    projected_fixed_point,
    solve_equilibrium,
    stationary_distribution,
)
from .policies import (
    AttackerBehavior,
    DefenderBehavior,
    GreedyFromWeights,
    MixedAction,
    behavior_pair,
    greedy_policy_pair_from_Q,
    solve_matrix_game_defender,
    validate_C0,
)

__all__ = [
    "AttackerBehavior",
    "DefenderBehavior",
    "DivergenceError",
    "EvalConfig",
    "FeatureBasis",
    "GameParams",
    "GreedyFromWeights",
    "LearningSchedule",
    "MetricsReport",
    "MixedAction",
    "TrainConfig",
    "TrainTrajectory",
    "TransitionEvent",
    "TruncatedChain",
    "TruncatedSpace",
    "behavior_pair",
    "convergence_curve",
    "embedded_reward",
    "greedy_policy_pair_from_Q",
    "instantaneous_reward",
    "marginal_rates",
    "mc_discounted_cost",
    "next_state_distribution",
    "normalized_mean_cost",
    "policy_consistency",
    "projected_fixed_point",
    "q_value",
    "sample_equilibrium_states",
    "sample_transition",
    "solve_equilibrium",
    "solve_matrix_game_defender",
    "stationary_distribution",
    "td_error",
    "train",
    "validate_C0",
    "validate_params",
    "weight_interpretation_report",
]
