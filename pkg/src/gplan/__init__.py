"""Generalized planning on grid worlds.

Train a graph-network policy/value model with PPO and a size curriculum on
small procedurally generated PDDL instances, then solve larger unseen
instances with policy-guided greedy best-first search.
"""

__version__ = "0.1.0"

from .pddl import parse_domain, parse_problem
from .ground import ground_all, GroundTask, State
from .graphenc import EncoderConfig, TaskEncoder
from .agent import NetConfig, PlanningTask, PolicyValueNet, build_model
from .training import TrainConfig, Trainer
from .search import Budget, baseline_gbfs, gbfs_gnn, optimal_plan_length, validate_plan

__all__ = [
    "parse_domain", "parse_problem", "ground_all", "GroundTask", "State",
    "EncoderConfig", "TaskEncoder", "NetConfig", "PlanningTask",
    "PolicyValueNet", "build_model", "TrainConfig", "Trainer", "Budget",
    "baseline_gbfs", "gbfs_gnn", "optimal_plan_length", "validate_plan",
    "__version__",
]
