from __future__ import annotations

import numpy as np

from .. import nn
from .policy import critic_value


class TrainingAborted(RuntimeError):
    """Raised when an update produces non-finite values; carries a diagnostic dump."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


def make_critic(obs_dim, act_dim, hidden, rng, dtype) -> nn.DenseNet:
    return nn.DenseNet([obs_dim + act_dim, *hidden, 1], "relu", "identity", rng=rng, dtype=dtype)


def critic_step(critic: nn.DenseNet, opt: nn.Adam, obs, act, target) -> float:
    """One mean-squared Bellman regression step; returns the pre-step loss."""
    tape = nn.GradTape()
    q = critic_value(critic, obs, act, tape)
    err = q - target
    grads, _ = nn.backward(tape, (2.0 / len(err)) * err[:, None])
    opt.step(grads)
    return float(np.mean(err * err))


def check_finite(diag: dict) -> dict:
    bad = [k for k, v in diag.items() if isinstance(v, float) and not np.isfinite(v)]
    if bad:
        raise TrainingAborted(f"non-finite training quantities: {bad}", diag)
    return diag
