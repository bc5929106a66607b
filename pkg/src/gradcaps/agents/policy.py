"""Policy network and the regularized actor objective shared by SAC and TD3."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import nn
from ..smoothness import RegularizerSpec, temporal_loss_batch
from .buffer import TripleBatch

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG2 = math.log(2.0)


class Policy:
    """MLP policy with a tanh-squashed output scaled to ``[low, high]``.

    A stochastic policy emits ``[mean | log_std]`` (Gaussian head); a
    deterministic one emits the mean only. Either way the deterministic action
    is ``squash(mean)``.
    """

    def __init__(self, obs_dim, act_dim, hidden, low, high, stochastic=True, rng=None, dtype=np.float64):
        self.obs_dim, self.act_dim = int(obs_dim), int(act_dim)
        self.stochastic = bool(stochastic)
        self.low = np.asarray(low, dtype=np.float64).reshape(act_dim)
        self.high = np.asarray(high, dtype=np.float64).reshape(act_dim)
        self.scale = (self.high - self.low) / 2.0
        self.center = (self.high + self.low) / 2.0
        out = 2 * act_dim if stochastic else act_dim
        self.net = nn.DenseNet([obs_dim, *hidden, out], "relu", "identity", rng=rng, dtype=dtype)

    @property
    def params(self) -> list[np.ndarray]:
        return self.net.params

    def copy(self) -> "Policy":
        other = object.__new__(Policy)
        other.__dict__.update(self.__dict__)
        other.net = self.net.copy()
        return other

    def heads(self, obs, tape: nn.GradTape | None = None):
        """Return ``(mean, log_std, raw)``; log_std is None for deterministic policies."""
        raw = nn.forward(self.net, np.atleast_2d(obs), tape)
        if self.stochastic:
            mean, log_std = nn.gaussian_head(raw)
            return mean, log_std, raw
        return raw, None, raw

    def squash(self, mean: np.ndarray) -> np.ndarray:
        return self.center + self.scale * np.tanh(mean)

    def deterministic(self, obs) -> np.ndarray:
        single = np.ndim(obs) == 1
        mean, _, _ = self.heads(obs)
        a = self.squash(mean)
        return a[0] if single else a

    def sample(self, obs, rng: np.random.Generator):
        """Reparameterised tanh-Gaussian sample; returns ``(action, log_prob, parts)``."""
        mean, log_std, raw = self.heads(obs)
        return tanh_gaussian_sample(mean, log_std, self.scale, self.center, rng)

    def to_dict(self) -> dict:
        return {
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "stochastic": self.stochastic,
            "low": self.low.tolist(),
            "high": self.high.tolist(),
            "net": self.net.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Policy":
        net = nn.DenseNet.from_dict(d["net"])
        p = cls(d["obs_dim"], d["act_dim"], net.sizes[1:-1], d["low"], d["high"], d["stochastic"], dtype=net.dtype)
        p.net = net
        return p


def deterministic_action(policy: Policy, s) -> np.ndarray:
    a = policy.deterministic(s)
    if not np.isfinite(a).all():
        raise nn.NonFiniteError("non-finite deterministic action")
    return a


def tanh_gaussian_sample(mean, log_std, scale, center, rng):
    xi = rng.standard_normal(mean.shape)
    std = np.exp(log_std)
    u = mean + std * xi
    y = np.tanh(u)
    a = center + scale * y
    # log(1 - tanh(u)^2) in a numerically stable form
    log_det = 2.0 * (_LOG2 - u - np.logaddexp(0.0, -2.0 * u))
    logp = np.sum(-0.5 * xi * xi - log_std - _HALF_LOG_2PI - np.log(scale) - log_det, axis=1)
    return a, logp, (xi, std, u, y)


@dataclass
class ActorLoss:
    total: float
    vanilla: float
    temporal: float
    spatial: float
    grads: list[np.ndarray] | None
    extras: dict


def critic_value(critic: nn.DenseNet, obs, act, tape: nn.GradTape | None = None) -> np.ndarray:
    return nn.forward(critic, np.concatenate([obs, act], axis=1), tape)[:, 0]


def critic_action_grad(critic: nn.DenseNet, obs, act, weight) -> tuple[np.ndarray, np.ndarray]:
    """Q values and ``weight * dQ/da`` per row."""
    tape = nn.GradTape()
    q = critic_value(critic, obs, act, tape)
    _, g_in = nn.backward(tape, np.asarray(weight).reshape(-1, 1), params=False)
    return q, g_in[:, obs.shape[1]:]


def sac_objective(critics, alpha: float, rng: np.random.Generator):
    """Vanilla SAC actor loss ``mean(alpha * log_pi - min_i Q_i)`` as an objective head."""

    def head(policy: Policy, obs, mean, log_std):
        n = len(obs)
        a, logp, (xi, std, u, y) = tanh_gaussian_sample(mean, log_std, policy.scale, policy.center, rng)
        tapes = [nn.GradTape() for _ in critics]
        qs = np.stack([critic_value(c, obs, a, t) for c, t in zip(critics, tapes)])
        pick = np.argmin(qs, axis=0)
        q = qs[pick, np.arange(n)]
        loss = float(np.mean(alpha * logp - q))
        g_a = np.zeros_like(a)
        for i, t in enumerate(tapes):
            w = np.where(pick == i, -1.0 / n, 0.0)
            if np.any(w):
                _, g = nn.backward(t, w.reshape(-1, 1), params=False)
                g_a += g[:, obs.shape[1]:]
        d_logp = alpha / n
        g_u = g_a * policy.scale * (1.0 - y * y) + d_logp * 2.0 * y
        g_mean = g_u
        g_log_std = -d_logp + g_u * std * xi
        return loss, g_mean, g_log_std, {"log_prob": logp, "q": q}

    return head


def deterministic_objective(critic):
    """Vanilla TD3/DDPG actor loss ``-mean(Q_1(s, pi(s)))``."""

    def head(policy: Policy, obs, mean, log_std):
        n = len(obs)
        a = policy.squash(mean)
        q, g_a = critic_action_grad(critic, obs, a, np.full(n, -1.0 / n))
        g_mean = g_a * policy.scale * (1.0 - np.tanh(mean) ** 2)
        return float(-np.mean(q)), g_mean, None, {"q": q}

    return head


def actor_loss_with_regularizer(
    policy: Policy,
    batch: TripleBatch,
    spec: RegularizerSpec,
    objective,
    rng_spatial: np.random.Generator | None = None,
    with_grads: bool = True,
) -> ActorLoss:
    """Vanilla actor objective plus weighted smoothness terms, with parameter grads.

    All regularizer actions are recomputed deterministically from the current
    policy at the stored states, so gradients flow through every stencil
    point. When the regularizer is inactive only ``batch.s`` is evaluated and
    no extra randomness is drawn.
    """
    n = len(batch)
    use_temporal = spec.active and spec.lambda_t > 0
    use_spatial = spec.active and spec.lambda_s > 0
    blocks = [batch.s]
    if use_temporal:
        blocks.append(batch.s_next)
        if spec.needs_prev:
            if batch.s_prev is None:
                raise ValueError("gradcaps regularizer needs s_prev in the batch")
            blocks.append(batch.s_prev)
    if use_spatial:
        if rng_spatial is None:
            raise ValueError("spatial smoothness needs an rng")
        blocks.append(batch.s + spec.spatial_sigma * rng_spatial.standard_normal(batch.s.shape))
    x = blocks[0] if len(blocks) == 1 else np.concatenate(blocks, axis=0)

    tape = nn.GradTape() if with_grads else None
    mean, log_std, raw = policy.heads(x, tape)
    g_mean = np.zeros_like(mean)
    g_log_std = np.zeros_like(mean) if policy.stochastic else None

    vanilla, gm, gl, extras = objective(policy, batch.s, mean[:n], None if log_std is None else log_std[:n])
    g_mean[:n] += gm
    if gl is not None:
        g_log_std[:n] += gl

    temporal = spatial = 0.0
    if use_temporal or use_spatial:
        det = policy.squash(mean)
        g_det = np.zeros_like(det)
        a_t, k = det[:n], 1
        if use_temporal:
            a_next = det[n : 2 * n]
            a_prev = None
            k = 2
            if spec.needs_prev:
                a_prev = det[2 * n : 3 * n]
                k = 3
            per_row, (gp, gt, gn) = temporal_loss_batch(spec.kind, a_prev, a_t, a_next, spec.epsilon)
            temporal = float(np.mean(per_row))
            w = spec.lambda_t / n
            g_det[:n] += w * gt
            g_det[n : 2 * n] += w * gn
            if gp is not None:
                g_det[2 * n : 3 * n] += w * gp
        if use_spatial:
            pert = det[k * n : (k + 1) * n]
            per_row, (_, g_a, g_pert) = temporal_loss_batch("caps", None, a_t, pert)
            spatial = float(np.mean(per_row))
            w = spec.lambda_s / n
            g_det[:n] += w * g_a
            g_det[k * n : (k + 1) * n] += w * g_pert
        g_mean += g_det * policy.scale * (1.0 - np.tanh(mean) ** 2)

    total = vanilla + spec.lambda_t * temporal + spec.lambda_s * spatial
    grads = None
    if with_grads:
        if policy.stochastic:
            # clamped log_std entries receive no gradient
            d = policy.act_dim
            g_log_std = np.where((raw[:, d:] > nn.LOG_STD_MIN) & (raw[:, d:] < nn.LOG_STD_MAX), g_log_std, 0.0)
            g_out = np.concatenate([g_mean, g_log_std], axis=1)
        else:
            g_out = g_mean
        grads, _ = nn.backward(tape, g_out)
    return ActorLoss(total, vanilla, temporal, spatial, grads, extras)
