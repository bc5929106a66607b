"""Experiment configuration: TOML (preferred) or JSON, round-trippable.

Schema::

    run_id = "cosine-gradcaps"     # unique within output_dir
    output_dir = "runs"
    total_steps = 50000
    eval_interval = 2000
    eval_episodes = 10
    seeds = [0, 1, 2, 3, 4]

    [env]                          # name = "wave" | "pendulum", rest are spec fields
    name = "wave"
    kind = "cosine"

    [agent]                        # AgentConfig fields
    algorithm = "sac"

    [regularizer]                  # RegularizerSpec fields
    kind = "gradcaps_norm"
    lambda_t = 1.0
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from ..agents import AgentConfig
from ..envs import PendulumSpec, WaveSpec
from ..smoothness import RegularizerSpec

OUTPUT_ROOT_ENV = "GRADCAPS_OUTPUT_ROOT"

DEFAULT_HIDDEN = {"wave": (64, 64), "pendulum": (256, 256)}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    name: str = "wave"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            spec = self.spec()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid [env] section: {exc}") from exc
        # store the full parameter set so that equality survives a save/load cycle
        object.__setattr__(self, "params", dataclasses.asdict(spec))

    def spec(self):
        if self.name == "wave":
            return WaveSpec(**self.params)
        if self.name == "pendulum":
            return PendulumSpec(**self.params)
        raise ConfigError(f"unknown env name {self.name!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, **dataclasses.asdict(self.spec())}


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig
    agent: AgentConfig
    run_id: str = "run"
    output_dir: str = "runs"
    total_steps: int = 50_000
    eval_interval: int = 2000
    eval_episodes: int = 10
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ConfigError("at least one seed required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("duplicate seeds")
        if self.total_steps < self.agent.warmup_steps:
            raise ConfigError("total_steps must be >= agent.warmup_steps")
        if self.eval_interval < 1 or self.eval_episodes < 1:
            raise ConfigError("eval_interval and eval_episodes must be >= 1")
        if not self.run_id or any(c in self.run_id for c in "/\\"):
            raise ConfigError(f"bad run_id {self.run_id!r}")

    @property
    def regularizer(self) -> RegularizerSpec:
        return self.agent.regularizer

    def to_dict(self) -> dict:
        agent = self.agent.to_dict()
        reg = agent.pop("regularizer")
        return {
            "run_id": self.run_id,
            "output_dir": self.output_dir,
            "total_steps": self.total_steps,
            "eval_interval": self.eval_interval,
            "eval_episodes": self.eval_episodes,
            "seeds": list(self.seeds),
            "env": self.env.to_dict(),
            "agent": agent,
            "regularizer": reg,
        }

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def with_regularizer(self, **changes) -> "RunConfig":
        reg = dataclasses.replace(self.regularizer, **changes)
        return self.replace(agent=dataclasses.replace(self.agent, regularizer=reg))

    def training_hash(self) -> str:
        """Hash of everything that determines training results (not run_id/output_dir/seeds)."""
        d = self.to_dict()
        for k in ("run_id", "output_dir", "seeds"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ROOT_ENV) or self.output_dir)


def config_from_dict(d: dict) -> RunConfig:
    d = dict(d)
    try:
        env = dict(d.pop("env", {}))
        env_name = env.pop("name", "wave")
        agent = dict(d.pop("agent", {}))
        agent.setdefault("hidden", DEFAULT_HIDDEN.get(env_name, (64, 64)))
        reg = RegularizerSpec(**d.pop("regularizer", {}))
        unknown = set(d) - {f.name for f in dataclasses.fields(RunConfig)}
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        return RunConfig(env=EnvConfig(env_name, env), agent=AgentConfig(regularizer=reg, **agent), **d)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomli.loads(text)
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(data)


def dumps_config(config: RunConfig, fmt: str = "toml") -> str:
    d = config.to_dict()
    if fmt == "json":
        return json.dumps(d, indent=2, sort_keys=True) + "\n"
    return tomli_w.dumps(d)


def save_config(config: RunConfig, path) -> None:
    path = Path(path)
    path.write_text(dumps_config(config, "json" if path.suffix == ".json" else "toml"))
