"""Federated model-free learning of LQR tracking controllers."""
from .errors import *  # noqa: F401,F403
from .lqr import InitSampler, LqrProblem, Policy, is_stable, rollout_cost
from .analytic import exact_gradient, expected_cost, sample_cost, solve_optimal, solve_policy_value
from .trainers import TrainConfig, TrainTrace, average_policies, run_federated, run_independent

__version__ = "0.1.0"
