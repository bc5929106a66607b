"""Rollout recording and the evaluation metrics: average return and action fluctuation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .smoothness import estimate_lipschitz


@dataclass
class EpisodeTrace:
    actions: np.ndarray  # (T, act_dim)
    rewards: np.ndarray  # (T,)
    references: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=np.float64)
        if self.actions.ndim == 1:
            self.actions = self.actions[:, None]
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        if len(self.actions) != len(self.rewards):
            raise ValueError("actions and rewards differ in length")

    @property
    def length(self) -> int:
        return len(self.rewards)

    @property
    def ret(self) -> float:
        return float(np.sum(self.rewards))


def _policy_fn(policy):
    if hasattr(policy, "deterministic"):
        return policy.deterministic
    return policy


def record_trace(policy, env, rng: np.random.Generator | None = None) -> EpisodeTrace:
    """Roll out ``policy`` (deterministic action path) for one full episode.

    ``policy`` is a :class:`~gradcaps.agents.Policy` or any callable mapping an
    observation to an action. ``references`` holds the env's reference signal
    at each step's scoring time (the wave target for wave tracking).
    """
    act = _policy_fn(policy)
    obs = env.reset(rng)
    actions, rewards, refs = [], [], []
    done = False
    t = 0
    while not done:
        a = np.asarray(act(obs), dtype=np.float64).reshape(-1)
        obs, r, done = env.step(a)
        t += 1
        actions.append(np.clip(a, env.action_low, env.action_high))
        rewards.append(r)
        refs.append(env.reference(t))
    return EpisodeTrace(np.array(actions), np.array(rewards), np.array(refs))


def action_fluctuation(trace) -> float:
    """Mean over steps of ``||a_t - a_{t-1}||``."""
    actions = trace.actions if isinstance(trace, EpisodeTrace) else np.asarray(trace, dtype=np.float64)
    if actions.ndim == 1:
        actions = actions[:, None]
    if len(actions) < 2:
        raise ValueError("fluctuation needs at least two actions")
    return float(np.mean(np.linalg.norm(np.diff(actions, axis=0), axis=1)))


def _mean_std(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    # shifting by x[0] makes identical returns give exactly zero spread
    std = float(np.std(x - x[0], ddof=1)) if len(x) > 1 else 0.0
    return float(np.mean(x)), std


@dataclass
class Evaluation:
    mean_return: float
    std_return: float
    fluctuation: float
    lipschitz_k1: float
    lipschitz_k2: float
    traces: list[EpisodeTrace]

    @property
    def returns(self) -> np.ndarray:
        return np.array([t.ret for t in self.traces])


def evaluate(policy, env, n_episodes: int = 10, rng: np.random.Generator | None = None) -> Evaluation:
    """Deterministic rollouts; fluctuation and Lipschitz estimates are macro-averaged over episodes."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    traces = [record_trace(policy, env, rng) for _ in range(n_episodes)]
    mean, std = _mean_std([t.ret for t in traces])
    return Evaluation(
        mean,
        std,
        float(np.mean([action_fluctuation(t) for t in traces])),
        float(np.mean([estimate_lipschitz(t.actions, 1) for t in traces])),
        float(np.mean([estimate_lipschitz(t.actions, 2) for t in traces])) if traces[0].length >= 3 else 0.0,
        traces,
    )


def average_reward(policy, env, n_episodes: int = 10, rng: np.random.Generator | None = None) -> tuple[float, float]:
    """Mean and sample std of undiscounted episode returns."""
    ev = evaluate(policy, env, n_episodes, rng)
    return ev.mean_return, ev.std_return
