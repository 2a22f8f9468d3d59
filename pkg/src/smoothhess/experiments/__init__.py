"""Synthetic datasets, toy-network training and reproduction runners."""

from .benchmark import AttackConfig, PmseConfig, run_attack_benchmark, run_pmse_benchmark
from .datasets import Dataset, gen_blobs, gen_four_quadrant, gen_nested_interactions
from .sweeps import log_grid, sweep_beta, sweep_sigma
from .training import FOUR_QUADRANT_SCHEDULE, NESTED_SCHEDULE, TrainConfig, train

__all__ = [
    "FOUR_QUADRANT_SCHEDULE",
    "NESTED_SCHEDULE",
    "AttackConfig",
    "Dataset",
    "PmseConfig",
    "TrainConfig",
    "gen_blobs",
    "gen_four_quadrant",
    "gen_nested_interactions",
    "log_grid",
    "run_attack_benchmark",
    "run_pmse_benchmark",
    "sweep_beta",
    "sweep_sigma",
    "train",
]
