"""Soft actor-critic with twin critics and optional automatic entropy tuning."""

from __future__ import annotations

import math

import numpy as np

from .. import nn
from .buffer import TripleBatch
from .common import TrainingAborted, check_finite, critic_step, make_critic
from .config import AgentConfig
from .policy import Policy, actor_loss_with_regularizer, critic_value, sac_objective


class SACAgent:
    def __init__(self, obs_dim, act_dim, low, high, config: AgentConfig, rngs: dict):
        self.config = config
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.rng_update = rngs["update"]
        self.rng_explore = rngs["explore"]
        self.rng_spatial = rngs["spatial"]
        init = rngs["init"]
        dtype = np.dtype(config.dtype)
        self.actor = Policy(obs_dim, act_dim, config.hidden, low, high, stochastic=True, rng=init, dtype=dtype)
        self.critics = [make_critic(obs_dim, act_dim, config.hidden, init, dtype) for _ in range(2)]
        self.targets = [c.copy() for c in self.critics]
        self.actor_opt = nn.Adam(self.actor.params, lr=config.actor_lr)
        self.critic_opts = [nn.Adam(c.params, lr=config.critic_lr) for c in self.critics]
        self.log_alpha = np.array([math.log(config.alpha)])
        self.alpha_opt = nn.Adam([self.log_alpha], lr=config.alpha_lr)
        self.target_entropy = -float(act_dim)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    @property
    def policy(self) -> Policy:
        return self.actor

    def act(self, obs, deterministic: bool = False) -> np.ndarray:
        if deterministic:
            return self.actor.deterministic(obs)
        a, _, _ = self.actor.sample(np.atleast_2d(obs), self.rng_explore)
        return a[0]

    def update(self, batch: TripleBatch) -> dict:
        cfg = self.config
        try:
            alpha = self.alpha
            a_next, logp_next, _ = self.actor.sample(batch.s_next, self.rng_update)
            q_next = np.minimum(*(critic_value(t, batch.s_next, a_next) for t in self.targets))
            target = batch.r + cfg.gamma * (1.0 - batch.done) * (q_next - alpha * logp_next)
            critic_loss = 0.5 * sum(
                critic_step(c, o, batch.s, batch.a, target) for c, o in zip(self.critics, self.critic_opts)
            )

            res = actor_loss_with_regularizer(
                self.actor,
                batch,
                cfg.regularizer,
                sac_objective(self.critics, alpha, self.rng_update),
                self.rng_spatial,
            )
            self.actor_opt.step(res.grads)

            if cfg.entropy == "auto":
                # d/dlog_alpha of -log_alpha * mean(log_pi + target_entropy)
                g = -np.mean(res.extras["log_prob"] + self.target_entropy)
                self.alpha_opt.step([np.array([g])])

            for t, c in zip(self.targets, self.critics):
                nn.soft_update(t, c, cfg.tau)
        except nn.NonFiniteError as exc:
            raise TrainingAborted(str(exc), {"update": self.updates, "alpha": self.alpha}) from exc
        self.updates += 1
        return check_finite(
            {
                "critic_loss": critic_loss,
                "actor_loss": res.total,
                "temporal_loss": res.temporal,
                "spatial_loss": res.spatial,
                "alpha": self.alpha,
                "q_mean": float(np.mean(res.extras["q"])),
            }
        )
