"""Action-smoothness penalties and sequence diagnostics.

Two families of temporal penalty are provided:

* CAPS: distance between consecutive actions, ``||a_{t+1} - a_t||``.
* Grad-CAPS: distance between consecutive action *changes*,
  ``||(a_t - a_{t-1}) - (a_{t+1} - a_t)||``, optionally weighted by
  ``tanh(||1 / (|a_{t+1} - a_{t-1}| + eps)||)`` so that zigzags (small net
  displacement) are penalised harder than steady ramps, independent of the
  action scale.

Scalar functions take single action vectors. ``temporal_loss_batch`` is the
vectorised training path and also returns gradients with respect to the three
stencil actions.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

KINDS = ("none", "caps", "gradcaps_raw", "gradcaps_norm")
AGGREGATIONS = ("mean", "sqrt_sum_sq")
NORM_MODES = ("tanh", "division")


@dataclass(frozen=True)
class RegularizerSpec:
    kind: str = "none"
    lambda_t: float = 1.0
    lambda_s: float = 0.0
    epsilon: float = 1e-3
    spatial_sigma: float = 0.05
    aggregation: str = "mean"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}; expected one of {KINDS}")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if self.lambda_t < 0 or self.lambda_s < 0:
            raise ValueError("regularizer weights must be non-negative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.spatial_sigma < 0:
            raise ValueError("spatial_sigma must be non-negative")
        if self.lambda_s > 0 and not self.spatial_sigma > 0:
            raise ValueError("lambda_s > 0 requires spatial_sigma > 0")

    @property
    def active(self) -> bool:
        """True when the regularizer contributes to the actor objective at all."""
        return self.kind != "none" and (self.lambda_t > 0 or self.lambda_s > 0)

    @property
    def needs_prev(self) -> bool:
        return self.kind.startswith("gradcaps") and self.lambda_t > 0

    def to_dict(self) -> dict:
        return asdict(self)


def _vec(a) -> np.ndarray:
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    if a.ndim != 1:
        raise ValueError(f"expected an action vector, got shape {a.shape}")
    return a


def _same_dim(*vs: np.ndarray) -> None:
    if len({v.shape for v in vs}) != 1:
        raise ValueError(f"action dimension mismatch: {[v.shape for v in vs]}")


def caps_temporal_loss(a_t, a_next) -> float:
    a_t, a_next = _vec(a_t), _vec(a_next)
    _same_dim(a_t, a_next)
    return float(np.linalg.norm(a_t - a_next))


def caps_spatial_loss(policy, state, sigma: float, rng: np.random.Generator | None = None, noise=None) -> float:
    """Distance between ``policy(s)`` and ``policy(s + sigma * noise)``.

    ``noise`` defaults to a standard normal draw from ``rng``. ``sigma == 0``
    means the perturbed state is the state itself.
    """
    if sigma < 0:
        raise ValueError("spatial sigma must be non-negative")
    state = np.asarray(state, dtype=np.float64)
    if noise is None:
        if rng is None:
            raise ValueError("need rng or an explicit noise draw")
        noise = rng.standard_normal(state.shape)
    perturbed = state + sigma * np.asarray(noise, dtype=np.float64)
    return float(np.linalg.norm(_vec(policy(state)) - _vec(policy(perturbed))))


def gradcaps_raw_loss(a_prev, a_t, a_next) -> float:
    a_prev, a_t, a_next = _vec(a_prev), _vec(a_t), _vec(a_next)
    _same_dim(a_prev, a_t, a_next)
    return float(np.linalg.norm((a_t - a_prev) - (a_next - a_t)))


def displacement_weight(a_prev, a_next, eps: float) -> float:
    """``tanh(||1 / (|a_next - a_prev| + eps)||)``, always in (0, 1)."""
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    delta = _vec(a_next) - _vec(a_prev)
    return float(np.tanh(np.linalg.norm(1.0 / (np.abs(delta) + eps))))


def gradcaps_normalized_loss(a_prev, a_t, a_next, eps: float = 1e-3) -> float:
    a_prev, a_t, a_next = _vec(a_prev), _vec(a_t), _vec(a_next)
    _same_dim(a_prev, a_t, a_next)
    return gradcaps_raw_loss(a_prev, a_t, a_next) * displacement_weight(a_prev, a_next, eps)


def gradcaps_division_loss(a_prev, a_t, a_next, eps: float = 0.0) -> float:
    """Diagnostic form ``||(da_t - da_{t+1}) / (delta + eps)||`` with signed delta.

    Literal elementwise division, no tanh; used to tabulate how normalisation
    rescales example sequences. Raises on a zero denominator.
    """
    a_prev, a_t, a_next = _vec(a_prev), _vec(a_t), _vec(a_next)
    _same_dim(a_prev, a_t, a_next)
    denom = (a_next - a_prev) + eps
    if np.any(denom == 0):
        raise ValueError("zero displacement in division form; use a nonzero eps")
    return float(np.linalg.norm(((a_t - a_prev) - (a_next - a_t)) / denom))


def _as_sequence(actions) -> np.ndarray:
    a = np.asarray(actions, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"expected a (T,) or (T, dim) action sequence, got {a.shape}")
    return a


def step_losses(actions, kind: str, mode: str = "tanh", eps: float = 1e-3) -> np.ndarray:
    """Per-step loss along an action sequence."""
    a = _as_sequence(actions)
    if kind == "caps":
        if len(a) < 2:
            raise ValueError("caps needs a sequence of length >= 2")
        return np.linalg.norm(a[1:] - a[:-1], axis=1)
    if kind not in ("gradcaps_raw", "gradcaps_norm"):
        raise ValueError(f"unknown loss kind {kind!r}")
    if len(a) < 3:
        raise ValueError("gradcaps needs a sequence of length >= 3")
    prev, cur, nxt = a[:-2], a[1:-1], a[2:]
    second = (cur - prev) - (nxt - cur)
    raw = np.linalg.norm(second, axis=1)
    if kind == "gradcaps_raw":
        return raw
    if mode == "tanh":
        if not eps > 0:
            raise ValueError("epsilon must be positive")
        return raw * np.tanh(np.linalg.norm(1.0 / (np.abs(nxt - prev) + eps), axis=1))
    if mode == "division":
        denom = (nxt - prev) + eps
        if np.any(denom == 0):
            raise ValueError("zero displacement in division form; use a nonzero eps")
        return np.linalg.norm(second / denom, axis=1)
    raise ValueError(f"unknown normalisation mode {mode!r}")


def aggregate(losses: np.ndarray, aggregation: str) -> float:
    if aggregation == "mean":
        return float(np.mean(losses))
    if aggregation == "sqrt_sum_sq":
        return float(np.sqrt(np.sum(np.square(losses))))
    raise ValueError(f"unknown aggregation {aggregation!r}")


def sequence_loss(actions, kind: str, aggregation: str = "sqrt_sum_sq", mode: str = "tanh", eps: float = 1e-3) -> float:
    return aggregate(step_losses(actions, kind, mode, eps), aggregation)


def estimate_lipschitz(actions, order: int = 1) -> float:
    """Empirical K over a trace: max first (order 1) or second (order 2) difference norm.

    Consecutive states are one step apart, so the bound reduces to the max
    step quantity.
    """
    a = _as_sequence(actions)
    if order == 1:
        return float(step_losses(a, "caps").max())
    if order == 2:
        return float(step_losses(a, "gradcaps_raw").max())
    raise ValueError("order must be 1 or 2")


def _unit_rows(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norm = np.linalg.norm(d, axis=1)
    safe = np.where(norm > 0, norm, 1.0)
    # zero numerator: subgradient 0
    return norm, np.where(norm[:, None] > 0, d / safe[:, None], 0.0)


def temporal_loss_batch(kind: str, a_prev, a_t, a_next, eps: float = 1e-3):
    """Per-row temporal loss and its gradients w.r.t. each stencil action.

    Arrays are ``(B, dim)``. ``a_prev`` is ignored (may be None) for CAPS.
    Returns ``(loss[B], (g_prev, g_t, g_next))`` where each gradient is the
    derivative of the row's own loss; ``g_prev`` is None for CAPS.
    """
    if kind == "caps":
        loss, u = _unit_rows(a_next - a_t)
        return loss, (None, -u, u)
    if kind not in ("gradcaps_raw", "gradcaps_norm"):
        raise ValueError(f"unknown temporal loss kind {kind!r}")
    second = 2.0 * a_t - a_prev - a_next
    raw, u = _unit_rows(second)
    if kind == "gradcaps_raw":
        return raw, (-u, 2.0 * u, -u)
    delta = a_next - a_prev
    w = 1.0 / (np.abs(delta) + eps)
    q = np.linalg.norm(w, axis=1)
    th = np.tanh(q)
    loss = raw * th
    # d tanh(q)/d delta = (1 - th^2) * (w / q) * (-sign(delta) * w^2)
    d_delta = (raw * (1.0 - th * th) / q)[:, None] * (-np.sign(delta) * w**3)
    gu = th[:, None] * u
    return loss, (-gu - d_delta, 2.0 * gu, -gu + d_delta)
