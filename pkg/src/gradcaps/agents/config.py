from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..smoothness import RegularizerSpec

ALGORITHMS = ("sac", "td3")


@dataclass(frozen=True)
class AgentConfig:
    algorithm: str = "sac"
    gamma: float = 0.99
    tau: float = 0.005
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    alpha_lr: float = 3e-4
    batch_size: int = 256
    hidden: tuple[int, ...] = (64, 64)
    warmup_steps: int = 1000
    # sac
    entropy: str = "auto"
    alpha: float = 0.2
    # td3 / ddpg
    policy_delay: int = 2
    target_noise: float = 0.2
    target_noise_clip: float = 0.5
    exploration_noise: float = 0.1
    ddpg: bool = False
    dtype: str = "float32"
    regularizer: RegularizerSpec = field(default_factory=RegularizerSpec)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.entropy not in ("auto", "fixed"):
            raise ValueError("entropy must be 'auto' or 'fixed'")
        if self.batch_size < 1 or self.policy_delay < 1 or self.warmup_steps < 0:
            raise ValueError("batch_size and policy_delay must be >= 1, warmup_steps >= 0")
        if self.ddpg and self.algorithm != "td3":
            raise ValueError("ddpg mode is a td3 configuration")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if isinstance(self.regularizer, dict):
            object.__setattr__(self, "regularizer", RegularizerSpec(**self.regularizer))

    @property
    def twin_critics(self) -> bool:
        return not self.ddpg

    @property
    def actor_delay(self) -> int:
        return 1 if self.ddpg else self.policy_delay

    @property
    def target_policy_noise(self) -> float:
        return 0.0 if self.ddpg else self.target_noise

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d
