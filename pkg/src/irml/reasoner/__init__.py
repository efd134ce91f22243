"""Reasoning policy, occupancy measures and adversarial imitation."""
from .imitation import (
    EvaluatorNetwork,
    ImitationConfig,
    InterpreterTrainer,
    TrainingHistory,
    greedy_match_rate,
    occupancy_gap,
    path_features,
    smoothed,
    toy_mdp,
    train_evaluator,
    train_interpreter,
)
from .occupancy import (
    EmpiricalPolicy,
    OccupancyTable,
    causal_entropy,
    distance_energy,
    distance_statistic,
    loss_F,
    occupancy_from_paths,
    occupancy_measure,
    total_variation,
)
from .policy import PolicyContext, PolicyNetwork, policy_forward, rollout, rollouts
