"""TD3 (clipped double-Q, delayed actor, target smoothing) and DDPG as its degenerate setting."""

from __future__ import annotations

import numpy as np

from .. import nn
from .buffer import TripleBatch
from .common import TrainingAborted, check_finite, critic_step, make_critic
from .config import AgentConfig
from .policy import Policy, actor_loss_with_regularizer, critic_value, deterministic_objective


class TD3Agent:
    def __init__(self, obs_dim, act_dim, low, high, config: AgentConfig, rngs: dict):
        self.config = config
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.rng_update = rngs["update"]
        self.rng_explore = rngs["explore"]
        self.rng_spatial = rngs["spatial"]
        init = rngs["init"]
        dtype = np.dtype(config.dtype)
        self.actor = Policy(obs_dim, act_dim, config.hidden, low, high, stochastic=False, rng=init, dtype=dtype)
        self.actor_target = self.actor.copy()
        n_critics = 2 if config.twin_critics else 1
        self.critics = [make_critic(obs_dim, act_dim, config.hidden, init, dtype) for _ in range(n_critics)]
        self.targets = [c.copy() for c in self.critics]
        self.actor_opt = nn.Adam(self.actor.params, lr=config.actor_lr)
        self.critic_opts = [nn.Adam(c.params, lr=config.critic_lr) for c in self.critics]
        self.updates = 0
        self._last_actor = {"actor_loss": 0.0, "temporal_loss": 0.0, "spatial_loss": 0.0, "q_mean": 0.0}

    @property
    def policy(self) -> Policy:
        return self.actor

    def act(self, obs, deterministic: bool = False) -> np.ndarray:
        a = self.actor.deterministic(obs)
        if deterministic:
            return a
        noise = self.config.exploration_noise * self.actor.scale * self.rng_explore.standard_normal(a.shape)
        return np.clip(a + noise, self.actor.low, self.actor.high)

    def target_actions(self, s_next) -> np.ndarray:
        a = self.actor_target.deterministic(s_next)
        sigma = self.config.target_policy_noise
        if sigma > 0:
            scale = self.actor.scale
            noise = np.clip(
                sigma * scale * self.rng_update.standard_normal(a.shape),
                -self.config.target_noise_clip * scale,
                self.config.target_noise_clip * scale,
            )
            a = np.clip(a + noise, self.actor.low, self.actor.high)
        return a

    def update(self, batch: TripleBatch) -> dict:
        cfg = self.config
        try:
            a_next = self.target_actions(batch.s_next)
            q_next = critic_value(self.targets[0], batch.s_next, a_next)
            for t in self.targets[1:]:
                q_next = np.minimum(q_next, critic_value(t, batch.s_next, a_next))
            target = batch.r + cfg.gamma * (1.0 - batch.done) * q_next
            critic_loss = float(
                np.mean([critic_step(c, o, batch.s, batch.a, target) for c, o in zip(self.critics, self.critic_opts)])
            )
            self.updates += 1
            if self.updates % cfg.actor_delay == 0:
                res = actor_loss_with_regularizer(
                    self.actor, batch, cfg.regularizer, deterministic_objective(self.critics[0]), self.rng_spatial
                )
                self.actor_opt.step(res.grads)
                nn.soft_update(self.actor_target.net, self.actor.net, cfg.tau)
                for t, c in zip(self.targets, self.critics):
                    nn.soft_update(t, c, cfg.tau)
                self._last_actor = {
                    "actor_loss": res.total,
                    "temporal_loss": res.temporal,
                    "spatial_loss": res.spatial,
                    "q_mean": float(np.mean(res.extras["q"])),
                }
        except nn.NonFiniteError as exc:
            raise TrainingAborted(str(exc), {"update": self.updates}) from exc
        return check_finite({"critic_loss": critic_loss, **self._last_actor})
