"""Joint perception-action planning over invariant finite belief sets."""

from .belief import (
    AssumptionViolation,
    BeliefError,
    BeliefSets,
    bayes_update,
    build_local_blur_set,
    build_prior_set,
    build_simplex_grid,
    entropy,
    kl_divergence,
    predict,
)
from .lp import LPInstance, LPSolution, LPStatus, assemble_lp, solve_lp, verify_feasibility
from .model import (
    GridworldConfig,
    ModelError,
    PerceptionMDP,
    build_gridworld,
    build_three_state,
    load_builtin_config,
    validate_model,
)
from .policy import PerceptionActionPolicy, kernel_information, reconstruct_kernel, stage_information
from .simulator import batch_rollouts, empirical_vs_planned, rollout
from .solver import SolveResult, value_iteration

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolation",
    "BeliefError",
    "BeliefSets",
    "GridworldConfig",
    "LPInstance",
    "LPSolution",
    "LPStatus",
    "ModelError",
    "PerceptionActionPolicy",
    "PerceptionMDP",
    "SolveResult",
    "assemble_lp",
    "batch_rollouts",
    "bayes_update",
    "build_gridworld",
    "build_local_blur_set",
    "build_prior_set",
    "build_simplex_grid",
    "build_three_state",
    "empirical_vs_planned",
    "entropy",
    "kernel_information",
    "kl_divergence",
    "load_builtin_config",
    "predict",
    "reconstruct_kernel",
    "rollout",
    "solve_lp",
    "stage_information",
    "validate_model",
    "value_iteration",
    "verify_feasibility",
]
