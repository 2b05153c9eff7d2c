"""Robust optimistic RL under locally-bounded misspecification, on small tabular MDPs."""
from .env import (ConstructionError, EpisodeLog, LinearMdpSpec, MisspecInjector, MixturePolicy,
                  ParameterError, PolicyTable, TabularMdp, build_chain_env, build_linear_env,
                  evaluate_policy, exact_optimal_values, inject_misspecification, make_rng,
                  occupancy_measure, sample_episode, verify_lbm_assumption)

__all__ = [
    "ConstructionError", "EpisodeLog", "LinearMdpSpec", "MisspecInjector", "MixturePolicy",
    "ParameterError", "PolicyTable", "TabularMdp", "build_chain_env", "build_linear_env",
    "evaluate_policy", "exact_optimal_values", "inject_misspecification", "make_rng",
    "occupancy_measure", "sample_episode", "verify_lbm_assumption",
]
