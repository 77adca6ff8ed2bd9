"""Adaptive nonparametric contextual bandits under covariate shift."""
from .baselines import FixedGridSE, GridExp3, OraclePolicy, UniformPolicy
from .environments import CovariateSampler, NoiseModel, Phase, RewardField, ShiftSchedule, generate_bump_field
from .harness import ExperimentConfig, load_config, run_experiment
from .policy import AdaptiveBandit, InvariantMonitor, PolicyConfig
from .tree import BinId, PartitionTree, bin_of

__all__ = [
    "AdaptiveBandit",
    "BinId",
    "CovariateSampler",
    "ExperimentConfig",
    "FixedGridSE",
    "GridExp3",
    "InvariantMonitor",
    "NoiseModel",
    "OraclePolicy",
    "PartitionTree",
    "Phase",
    "PolicyConfig",
    "RewardField",
    "ShiftSchedule",
    "UniformPolicy",
    "bin_of",
    "generate_bump_field",
    "load_config",
    "run_experiment",
]
__version__ = "0.1.0"
