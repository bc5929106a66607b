"""Dense networks with a single-use gradient tape and an Adam optimizer.

Arrays are plain 2-D numpy arrays (rows = batch, cols = features). Weights
are stored as ``(fan_in, fan_out)`` so a layer is ``h @ W + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0

_ACTIVATIONS = ("relu", "tanh", "identity")


class NonFiniteError(FloatingPointError):
    """A forward pass, gradient or update produced NaN/Inf."""


class TapeError(RuntimeError):
    pass


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.isfinite(x).all():
        raise NonFiniteError(f"non-finite values in {what}")


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _activate_grad(z: np.ndarray, h: np.ndarray, g: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return g * (z > 0.0)
    if kind == "tanh":
        return g * (1.0 - h * h)
    return g


class DenseNet:
    """Multilayer perceptron with per-layer ``(W, b)`` parameters.

    Weights are initialised uniformly in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``
    from ``rng``; biases use the same scheme.
    """

    def __init__(
        self,
        sizes,
        hidden_activation: str = "relu",
        output_activation: str = "identity",
        rng: np.random.Generator | None = None,
        dtype=np.float64,
    ):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        if hidden_activation not in ("relu", "tanh"):
            raise ValueError(f"hidden activation must be relu or tanh, got {hidden_activation!r}")
        if output_activation not in ("identity", "tanh"):
            raise ValueError(f"output activation must be identity or tanh, got {output_activation!r}")
        self.sizes = sizes
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(0) if rng is None else rng
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, (fan_in, fan_out)).astype(self.dtype))
            self.params.append(rng.uniform(-bound, bound, (1, fan_out)).astype(self.dtype))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def activation(self, layer: int) -> str:
        return self.output_activation if layer == self.n_layers - 1 else self.hidden_activation

    def copy(self) -> "DenseNet":
        other = object.__new__(DenseNet)
        other.sizes = list(self.sizes)
        other.hidden_activation = self.hidden_activation
        other.output_activation = self.output_activation
        other.dtype = self.dtype
        other.params = [p.copy() for p in self.params]
        return other

    def set_params(self, params) -> None:
        if len(params) != len(self.params):
            raise ValueError("parameter count mismatch")
        for dst, src in zip(self.params, params):
            src = np.asarray(src, dtype=self.dtype)
            if src.shape != dst.shape:
                raise ValueError(f"parameter shape mismatch: {src.shape} vs {dst.shape}")
            dst[...] = src

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
            "dtype": self.dtype.name,
            "params": [p.tolist() for p in self.params],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNet":
        net = cls(d["sizes"], d["hidden_activation"], d["output_activation"], dtype=d.get("dtype", "float64"))
        net.set_params(d["params"])
        return net

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)


@dataclass
class GradTape:
    """Activations cached by one forward pass; consumed by one backward pass."""

    net: DenseNet | None = None
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)
    used: bool = False

    @property
    def ready(self) -> bool:
        return self.net is not None and not self.used


def forward(net: DenseNet, x: np.ndarray, tape: GradTape | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=net.dtype)
    if x.ndim != 2 or x.shape[1] != net.sizes[0]:
        raise ValueError(f"input shape {x.shape} does not match network input size {net.sizes[0]}")
    if tape is not None:
        if tape.net is not None:
            raise TapeError("tape already holds a forward pass")
        tape.net = net
    h = x
    for k in range(net.n_layers):
        W, b = net.params[2 * k], net.params[2 * k + 1]
        z = h @ W + b
        out = _activate(z, net.activation(k))
        if tape is not None:
            tape.inputs.append(h)
            tape.pre.append(z)
            tape.post.append(out)
        h = out
    _check_finite(h, "network output")
    return h


def backward(
    tape: GradTape,
    output_grad: np.ndarray,
    params: bool = True,
) -> tuple[list[np.ndarray] | None, np.ndarray]:
    """Backpropagate ``output_grad`` (dLoss/dOutput) through a recorded pass.

    Returns ``(param_grads, input_grad)``; ``param_grads`` is ``None`` when
    ``params=False`` (input gradient only, cheaper).
    """
    if tape.net is None:
        raise TapeError("tape has no recorded forward pass")
    if tape.used:
        raise TapeError("tape already consumed by a backward pass")
    tape.used = True
    net = tape.net
    g = np.asarray(output_grad, dtype=net.dtype)
    if g.shape != tape.post[-1].shape:
        raise ValueError(f"output_grad shape {g.shape} != output shape {tape.post[-1].shape}")
    grads: list[np.ndarray] = [None] * len(net.params) if params else None  # type: ignore[list-item]
    for k in reversed(range(net.n_layers)):
        g = _activate_grad(tape.pre[k], tape.post[k], g, net.activation(k))
        if params:
            grads[2 * k] = tape.inputs[k].T @ g
            grads[2 * k + 1] = g.sum(axis=0, keepdims=True)
        g = g @ net.params[2 * k].T
    return grads, g


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update, applied in place. Returns ``params``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    state.step += 1
    c1 = 1.0 - beta1**state.step
    c2 = 1.0 - beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        _check_finite(g, "gradient")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params


class Adam:
    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState.zeros_like(params)

    def step(self, grads) -> None:
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)


def gaussian_head(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split ``[mean | log_std]`` features; log_std is clamped to [-20, 2]."""
    features = np.asarray(features)
    if features.ndim != 2 or features.shape[1] % 2:
        raise ValueError(f"gaussian head needs an even number of feature columns, got {features.shape}")
    _check_finite(features, "gaussian head input")
    d = features.shape[1] // 2
    return features[:, :d], np.clip(features[:, d:], LOG_STD_MIN, LOG_STD_MAX)


def squash(mean: np.ndarray, low: np.ndarray, high: np.ndarray) -> np.ndarray:
    """Deterministic action: tanh(mean) rescaled from [-1, 1] to [low, high]."""
    scale = (high - low) / 2.0
    return (high + low) / 2.0 + scale * np.tanh(mean)


def soft_update(target: DenseNet, online: DenseNet, tau: float) -> None:
    """``target <- tau * online + (1 - tau) * target`` parameter-wise."""
    if tau == 1.0:
        for t, o in zip(target.params, online.params):
            t[...] = o
        return
    for t, o in zip(target.params, online.params):
        t *= 1.0 - tau
        t += tau * o
