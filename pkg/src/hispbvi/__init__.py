"""Point-based planning for Dec-POMDPs with hierarchical information sharing."""
from .benchgen import BenchmarkSpec, generate, parse_model, serialize_model
from .model import DecPomdpModel, joint_reward, validate
from .occupancy import (cluster_histories, expected_reward, initial_occupancy, next_occupancy,
                        occupancy_distance)
from .pbvi import SolverConfig, error_bound, solve, underlying_mdp_values
from .subgame import solve_enum, solve_hierarchical
from .valuefn import eval_alpha, eval_beta, q_value, value_at

__all__ = [
    "BenchmarkSpec", "DecPomdpModel", "SolverConfig", "cluster_histories", "error_bound",
    "eval_alpha", "eval_beta", "expected_reward", "generate", "initial_occupancy",
    "joint_reward", "next_occupancy", "occupancy_distance", "parse_model", "q_value",
    "serialize_model", "solve", "solve_enum", "solve_hierarchical", "underlying_mdp_values",
    "validate", "value_at",
]
