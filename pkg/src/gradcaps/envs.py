"""Wave trajectory tracking and pendulum swing-up environments.

Both are exposed as pure ``reset``/``step`` functions over an immutable
:class:`EnvState` and wrapped in small stateful classes used by the training
loop. Observations are float64 vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class EnvDoneError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvState:
    observation: np.ndarray
    step: int = 0
    done: bool = False
    # environment-internal quantities not exposed in the observation
    physics: tuple = ()


@dataclass(frozen=True)
class WaveSpec:
    kind: str = "square"
    amplitude: float = 1.0
    period: int = 50
    episode_length: int = 200
    action_low: float = -2.0
    action_high: float = 2.0

    def __post_init__(self):
        if self.kind not in ("square", "cosine"):
            raise ValueError(f"wave kind must be square or cosine, got {self.kind!r}")
        if self.period < 2:
            raise ValueError("wave period must be >= 2")
        if self.episode_length < self.period:
            raise ValueError("episode length must be >= period")
        if not self.action_low < self.action_high:
            raise ValueError("action bounds must satisfy low < high")


@dataclass(frozen=True)
class PendulumSpec:
    mass: float = 1.0
    length: float = 1.0
    gravity: float = 10.0
    dt: float = 0.05
    max_torque: float = 2.0
    max_speed: float = 8.0
    episode_length: int = 200

    def __post_init__(self):
        for name in ("mass", "length", "gravity", "dt", "max_torque", "max_speed"):
            if not getattr(self, name) > 0:
                raise ValueError(f"pendulum {name} must be positive")
        if self.episode_length < 1:
            raise ValueError("episode length must be >= 1")


def waveform_value(spec: WaveSpec, t: float) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    if spec.kind == "square":
        return spec.amplitude if (t % spec.period) < spec.period / 2 else -spec.amplitude
    return spec.amplitude * math.cos(2.0 * math.pi * t / spec.period)


def wave_reset(spec: WaveSpec) -> EnvState:
    pos = waveform_value(spec, 0)
    return EnvState(np.array([0.0, pos]), 0, False)


def wave_step(spec: WaveSpec, state: EnvState, action) -> tuple[EnvState, float]:
    """Move to the predicted point and score it against the next target."""
    if state.done:
        raise EnvDoneError("step called on a finished episode")
    a = float(np.clip(np.asarray(action, dtype=np.float64).reshape(-1)[0], spec.action_low, spec.action_high))
    t = state.step + 1
    target = waveform_value(spec, t)
    gap = abs(a - target)
    obs = np.array([gap, a])
    return EnvState(obs, t, t >= spec.episode_length), -gap


def angle_normalize(x: float) -> float:
    return ((x + math.pi) % (2.0 * math.pi)) - math.pi


def _pendulum_obs(theta: float, theta_dot: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta), theta_dot])


def pendulum_reset(
    spec: PendulumSpec,
    rng: np.random.Generator | None = None,
    theta: float | None = None,
    theta_dot: float | None = None,
) -> EnvState:
    """Start at the given angle/velocity, or uniformly in [-pi, pi] x [-1, 1]."""
    if theta is None or theta_dot is None:
        if rng is None:
            raise ValueError("need rng or an explicit initial state")
        th0, thd0 = rng.uniform([-math.pi, -1.0], [math.pi, 1.0])
        theta = th0 if theta is None else theta
        theta_dot = thd0 if theta_dot is None else theta_dot
    return EnvState(_pendulum_obs(theta, theta_dot), 0, False, (float(theta), float(theta_dot)))


def pendulum_step(spec: PendulumSpec, state: EnvState, torque) -> tuple[EnvState, float]:
    """Semi-implicit Euler step; theta = 0 is upright."""
    if state.done:
        raise EnvDoneError("step called on a finished episode")
    u = float(np.clip(np.asarray(torque, dtype=np.float64).reshape(-1)[0], -spec.max_torque, spec.max_torque))
    theta, theta_dot = state.physics
    g, m, l, dt = spec.gravity, spec.mass, spec.length, spec.dt
    reward = -(angle_normalize(theta) ** 2 + 0.1 * theta_dot**2 + 0.001 * u**2)
    theta_dot = theta_dot + (3.0 * g / (2.0 * l) * math.sin(theta) + 3.0 / (m * l * l) * u) * dt
    theta_dot = min(max(theta_dot, -spec.max_speed), spec.max_speed)
    theta = theta + theta_dot * dt
    t = state.step + 1
    return EnvState(_pendulum_obs(theta, theta_dot), t, t >= spec.episode_length, (theta, theta_dot)), reward


def pendulum_energy(spec: PendulumSpec, state: EnvState) -> float:
    """Kinetic plus potential energy of a uniform rod pivoting at one end."""
    theta, theta_dot = state.physics
    inertia = spec.mass * spec.length**2 / 3.0
    return 0.5 * inertia * theta_dot**2 + spec.mass * spec.gravity * spec.length / 2.0 * math.cos(theta)


class WaveEnv:
    obs_dim = 2
    act_dim = 1

    def __init__(self, spec: WaveSpec):
        self.spec = spec
        self.action_low = np.array([spec.action_low])
        self.action_high = np.array([spec.action_high])
        self.state: EnvState | None = None

    @property
    def episode_length(self) -> int:
        return self.spec.episode_length

    def reset(self, rng: np.random.Generator | None = None) -> np.ndarray:
        self.state = wave_reset(self.spec)
        return self.state.observation

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        self.state, reward = wave_step(self.spec, self.state, action)
        return self.state.observation, reward, self.state.done

    def reference(self, t: int) -> float:
        return waveform_value(self.spec, t)


class PendulumEnv:
    obs_dim = 3
    act_dim = 1

    def __init__(self, spec: PendulumSpec):
        self.spec = spec
        self.action_low = np.array([-spec.max_torque])
        self.action_high = np.array([spec.max_torque])
        self.state: EnvState | None = None

    @property
    def episode_length(self) -> int:
        return self.spec.episode_length

    def reset(self, rng: np.random.Generator | None = None) -> np.ndarray:
        self.state = pendulum_reset(self.spec, rng)
        return self.state.observation

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        self.state, reward = pendulum_step(self.spec, self.state, action)
        return self.state.observation, reward, self.state.done

    def reference(self, t: int) -> float:
        return 0.0


def make_env(name: str, **params):
    if name == "wave":
        return WaveEnv(WaveSpec(**params))
    if name == "pendulum":
        return PendulumEnv(PendulumSpec(**params))
    raise ValueError(f"unknown environment {name!r}")


__all__ = [
    "EnvState",
    "EnvDoneError",
    "WaveSpec",
    "PendulumSpec",
    "WaveEnv",
    "PendulumEnv",
    "waveform_value",
    "wave_reset",
    "wave_step",
    "pendulum_reset",
    "pendulum_step",
    "pendulum_energy",
    "angle_normalize",
    "make_env",
]
