"""Masked PPO with a hand-differentiated dense network."""
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .distributions import (GradVariant, M, composite_log_prob, masked_entropy, masked_log_prob,
                            masked_sample, policy_gradient)
from .network import Architecture, backward, forward, init_params
from .ppo import Adam, NonFiniteLoss, PpoConfig, gae, learning_rate, ppo_loss, ppo_update

__all__ = [
    "Adam", "Architecture", "Checkpoint", "CheckpointError", "GradVariant", "M", "NonFiniteLoss",
    "PpoConfig", "backward", "composite_log_prob", "forward", "gae", "init_params", "learning_rate",
    "load_checkpoint", "masked_entropy", "masked_log_prob", "masked_sample", "policy_gradient",
    "ppo_loss", "ppo_update", "save_checkpoint",
]
