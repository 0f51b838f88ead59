"""Optimistic reinforcement learning with Kullback-Leibler confidence balls (KL-UCRL) and the UCRL2 baseline."""

__version__ = "0.1.0"

from .agents import Agent, AgentConfig, CountTables, estimate, theorem1_constants, ucrl2_radii
from .envs import Environment, SparseGenConfig, random_sparse, riverswim, sample_step, sixarms
from .evi import ConfidenceSet, OptimisticSolution, extended_value_iteration, optimistic_reward
from .harness import ExperimentConfig, ExperimentResult, compute_regret, run_experiment
from .klopt import Branch, KlMaxSolution, f_eval, kl_divergence, max_kl, max_l1, newton_solve
from .mdp import Mdp, PlanningSolution, compute_diameter, span, value_iteration

__all__ = [
    "Agent",
    "AgentConfig",
    "Branch",
    "ConfidenceSet",
    "CountTables",
    "Environment",
    "ExperimentConfig",
    "ExperimentResult",
    "KlMaxSolution",
    "Mdp",
    "OptimisticSolution",
    "PlanningSolution",
    "SparseGenConfig",
    "compute_diameter",
    "compute_regret",
    "estimate",
    "extended_value_iteration",
    "f_eval",
    "kl_divergence",
    "max_kl",
    "max_l1",
    "newton_solve",
    "optimistic_reward",
    "random_sparse",
    "riverswim",
    "run_experiment",
    "sample_step",
    "sixarms",
    "span",
    "theorem1_constants",
    "ucrl2_radii",
    "value_iteration",
]
