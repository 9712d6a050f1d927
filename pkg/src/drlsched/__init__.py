"""Deep reinforcement learning scheduler for multi-resource, multi-machine clusters."""

from .environment import EnvConfig, RewardWeights, SchedulingEnv
from .policy import NetConfig, PolicyParams, init_params, load_params, save_params
from .trainer import TrainConfig, evaluate, train, train_iteration
from .workload import Job, JobSet, WorkloadParams, generate_jobset, generate_jobsets

__version__ = "0.1.0"

__all__ = [
    "EnvConfig", "RewardWeights", "SchedulingEnv",
    "NetConfig", "PolicyParams", "init_params", "load_params", "save_params",
    "TrainConfig", "evaluate", "train", "train_iteration",
    "Job", "JobSet", "WorkloadParams", "generate_jobset", "generate_jobsets",
]
