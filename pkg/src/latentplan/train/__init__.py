"""Training loop: collection, replay, targets, the joint loss, optimization."""

from .buffer import GameSegment, ReplayBuffer
from .collect import collect_experience, evaluate, play_episode
from .losses import (
    LossWeights,
    continuous_policy_loss,
    decode_regularization,
    gaussian_entropy,
    gaussian_log_density,
    joint_loss,
    multitask_aggregate,
    policy_entropy,
)
from ..scalars import categorical_to_scalar, contract, expand, scalar_to_categorical, support_bins
from .multitask import MultiTaskModel, MultiTaskTrainer, PaddedObsEnv, clone_multitask_model
from .targets import compute_value_target, episode_bootstrap_values, window_value_targets
from .trainer import TrainConfig, Trainer, assemble_batch

__all__ = [
    "GameSegment",
    "LossWeights",
    "MultiTaskModel",
    "MultiTaskTrainer",
    "PaddedObsEnv",
    "ReplayBuffer",
    "TrainConfig",
    "Trainer",
    "clone_multitask_model",
    "assemble_batch",
    "categorical_to_scalar",
    "collect_experience",
    "compute_value_target",
    "continuous_policy_loss",
    "contract",
    "decode_regularization",
    "episode_bootstrap_values",
    "evaluate",
    "expand",
    "gaussian_entropy",
    "gaussian_log_density",
    "joint_loss",
    "multitask_aggregate",
    "play_episode",
    "policy_entropy",
    "scalar_to_categorical",
    "support_bins",
    "window_value_targets",
]
