"""Actor-critic agents with pluggable action-smoothness regularization."""

from .buffer import InsufficientDataError, ReplayBuffer, Transition, TripleBatch
from .common import TrainingAborted
from .config import AgentConfig
from .policy import Policy, actor_loss_with_regularizer, deterministic_action
from .sac import SACAgent
from .td3 import TD3Agent


def make_agent(obs_dim, act_dim, low, high, config: AgentConfig, rngs: dict):
    cls = SACAgent if config.algorithm == "sac" else TD3Agent
    return cls(obs_dim, act_dim, low, high, config, rngs)


__all__ = [
    "AgentConfig",
    "InsufficientDataError",
    "Policy",
    "ReplayBuffer",
    "SACAgent",
    "TD3Agent",
    "TrainingAborted",
    "Transition",
    "TripleBatch",
    "actor_loss_with_regularizer",
    "deterministic_action",
    "make_agent",
]
