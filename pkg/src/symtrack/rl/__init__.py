from .agent import ActionTransform, Agent, default_action_transform
from .distributions import policy_entropy, policy_log_prob, policy_sample
from .gae import gae, normalize_advantages
from .mlp import init_mlp, mlp_backward, mlp_forward
from .optim import AdamState, adam_init, adam_step
from .ppo import PpoConfig, TrajectoryBatch, init_actor_critic, ppo_loss_and_grads, ppo_update
from .train import TrainResult, auc, train, write_log_csv

__all__ = [
    "ActionTransform", "Agent", "default_action_transform",
    "policy_entropy", "policy_log_prob", "policy_sample",
    "gae", "normalize_advantages",
    "init_mlp", "mlp_backward", "mlp_forward",
    "AdamState", "adam_init", "adam_step",
    "PpoConfig", "TrajectoryBatch", "init_actor_critic", "ppo_loss_and_grads", "ppo_update",
    "TrainResult", "auc", "train", "write_log_csv",
]
