"""Training loop, checkpointing and run manifests."""

from __future__ import annotations

import ast
import csv
import hashlib
import json
import logging
import os
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..agents import Policy, ReplayBuffer, TrainingAborted, Transition, make_agent
from ..envs import make_env
from ..runtime import flush_denormals, keep_heap_pages
from ..metrics import EpisodeTrace, evaluate
from .config import ConfigError, RunConfig, config_from_dict, dumps_config

log = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "step",
    "seed",
    "eval_mean_return",
    "eval_std",
    "action_fluctuation",
    "lipschitz_k1",
    "lipschitz_k2",
    "actor_loss",
    "critic_loss",
    "temporal_loss",
]

# Fixed spawn keys: adding a stream never shifts the others.
STREAMS = {"env": 0, "init": 1, "sampling": 2, "explore": 3, "update": 4, "spatial": 5, "eval": 6}

CHECKPOINT_FORMAT = "gradcaps-checkpoint"
MANIFEST_NAME = "manifest.json"

_TRAINING_SOURCES = (
    "nn.py",
    "smoothness.py",
    "envs.py",
    "runtime.py",
    "metrics.py",
    "agents/__init__.py",
    "agents/buffer.py",
    "agents/common.py",
    "agents/config.py",
    "agents/policy.py",
    "agents/sac.py",
    "agents/td3.py",
    "runner/config.py",
    "runner/experiment.py",
)


class ManifestError(RuntimeError):
    pass


def _normalized_source(path: Path) -> str:
    # comments, formatting and docstrings never change results, so hash the AST without them
    tree = ast.parse(path.read_text())
    for node in ast.walk(tree):
        body = getattr(node, "body", None)
        if (
            isinstance(body, list)
            and body
            and isinstance(body[0], ast.Expr)
            and isinstance(body[0].value, ast.Constant)
            and isinstance(body[0].value.value, str)
        ):
            node.body = body[1:] or [ast.Pass()]
    return ast.dump(tree)


def code_version() -> str:
    """Package version plus a digest of every source file that affects training results."""
    root = Path(__file__).resolve().parent.parent
    h = hashlib.sha256()
    for rel in _TRAINING_SOURCES:
        h.update(rel.encode())
        h.update(_normalized_source(root / rel).encode())
    return f"{__version__}+{h.hexdigest()[:12]}"


def make_rng(seed: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(STREAMS[stream],)))


def make_streams(seed: int) -> dict[str, np.random.Generator]:
    return {name: make_rng(seed, name) for name in STREAMS}


def build_env(config: RunConfig):
    return make_env(config.env.name, **config.env.params)


def method_label(config: RunConfig) -> str:
    kind = config.regularizer.kind if config.regularizer.active else "none"
    return {"none": "Vanilla", "caps": "CAPS", "gradcaps_raw": "Grad-CAPS-raw", "gradcaps_norm": "Grad-CAPS"}[kind]


@dataclass
class SeedResult:
    seed: int
    best_step: int
    best_return: float
    final_mean_return: float
    final_std_return: float
    final_fluctuation: float
    lipschitz_k1: float
    lipschitz_k2: float
    wall_time: float
    files: list[str] = field(default_factory=list)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _write_trace(path: Path, trace: EpisodeTrace) -> None:
    rows = []
    for t in range(trace.length):
        rows.append([t + 1, repr(float(trace.references[t])), *map(repr, trace.actions[t].tolist()), repr(float(trace.rewards[t]))])
    dims = [f"action_{i}" for i in range(trace.actions.shape[1])]
    _write_csv(path, ["t", "reference", *dims, "reward"], rows)


def save_checkpoint(path: Path, policy: Policy, config: RunConfig, seed: int, step: int, eval_return: float) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "config_hash": config.training_hash(),
        "config": config.to_dict(),
        "seed": seed,
        "step": step,
        "eval_mean_return": eval_return,
        "policy": policy.to_dict(),
    }
    path.write_text(json.dumps(payload))


def load_checkpoint(path) -> tuple[Policy, RunConfig, dict]:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path} is not a checkpoint file")
    return Policy.from_dict(payload["policy"]), config_from_dict(payload["config"]), payload


def train_seed(config: RunConfig, seed: int, out_dir) -> SeedResult:
    """Train one seed; writes metrics.csv, best_policy.json, final_eval.csv and trace.csv.

    Runs with subnormal flushing enabled so timings do not depend on how close the
    optimizer moments get to zero; the caller's floating-point mode is restored after.
    """
    keep_heap_pages()
    with flush_denormals():
        return _train_seed(config, seed, out_dir)


def _train_seed(config: RunConfig, seed: int, out_dir) -> SeedResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    acfg = config.agent
    rngs = make_streams(seed)
    env, eval_env = build_env(config), build_env(config)
    agent = make_agent(env.obs_dim, env.act_dim, env.action_low, env.action_high, acfg, rngs)
    buffer = ReplayBuffer(env.obs_dim, env.act_dim, capacity=config.total_steps)

    rows = []
    best_params, best_step, best_return = None, 0, -np.inf
    sums = {"actor_loss": 0.0, "critic_loss": 0.0, "temporal_loss": 0.0}
    n_updates = 0

    obs = env.reset(rngs["env"])
    prev, episode, k = None, 0, 0
    try:
        for step in range(1, config.total_steps + 1):
            if step <= acfg.warmup_steps:
                action = rngs["explore"].uniform(env.action_low, env.action_high)
            else:
                action = agent.act(obs)
            next_obs, reward, done = env.step(action)
            # episodes end on a time limit only, so transitions are never terminal
            buffer.push(Transition(obs, action, reward, next_obs, False, episode, k, prev))
            prev, obs, k = obs, next_obs, k + 1
            if done:
                obs = env.reset(rngs["env"])
                prev, episode, k = None, episode + 1, 0

            if step > acfg.warmup_steps and buffer.n_triples >= acfg.batch_size:
                diag = agent.update(buffer.sample_triples(acfg.batch_size, rngs["sampling"]))
                for key in sums:
                    sums[key] += diag[key]
                n_updates += 1

            if step % config.eval_interval == 0 or step == config.total_steps:
                ev = evaluate(agent.policy, eval_env, config.eval_episodes, make_rng(seed, "eval"))
                means = {key: (v / n_updates if n_updates else 0.0) for key, v in sums.items()}
                rows.append(
                    [
                        step,
                        seed,
                        repr(ev.mean_return),
                        repr(ev.std_return),
                        repr(ev.fluctuation),
                        repr(ev.lipschitz_k1),
                        repr(ev.lipschitz_k2),
                        repr(means["actor_loss"]),
                        repr(means["critic_loss"]),
                        repr(means["temporal_loss"]),
                    ]
                )
                sums = dict.fromkeys(sums, 0.0)
                n_updates = 0
                if ev.mean_return > best_return:
                    best_return, best_step = ev.mean_return, step
                    best_params = [p.copy() for p in agent.policy.params]
                log.info("seed %d step %d return %.3f fluct %.4f", seed, step, ev.mean_return, ev.fluctuation)
    except TrainingAborted as exc:
        (out_dir / "diagnostics.json").write_text(json.dumps({"error": str(exc), **exc.diagnostics}, default=repr))
        _write_csv(out_dir / "metrics.csv", METRIC_COLUMNS, rows)
        raise

    _write_csv(out_dir / "metrics.csv", METRIC_COLUMNS, rows)
    best = agent.policy.copy()
    best.net.set_params(best_params)
    save_checkpoint(out_dir / "best_policy.json", best, config, seed, best_step, best_return)

    final = evaluate(best, eval_env, config.eval_episodes, make_rng(seed, "eval"))
    _write_csv(
        out_dir / "final_eval.csv",
        ["episode", "return", "fluctuation"],
        [[i, repr(float(t.ret)), repr(float(np.mean(np.linalg.norm(np.diff(t.actions, axis=0), axis=1))))] for i, t in enumerate(final.traces)],
    )
    _write_trace(out_dir / "trace.csv", final.traces[0])
    return SeedResult(
        seed,
        best_step,
        float(best_return),
        final.mean_return,
        final.std_return,
        final.fluctuation,
        final.lipschitz_k1,
        final.lipschitz_k2,
        time.perf_counter() - start,
        ["metrics.csv", "best_policy.json", "final_eval.csv", "trace.csv"],
    )


@dataclass
class RunManifest:
    run_id: str
    config: dict
    config_hash: str
    code_version: str
    method: str
    seeds: dict[str, dict]
    files: list[str]
    complete: bool = True

    @property
    def run_config(self) -> RunConfig:
        return config_from_dict(self.config)

    def seed_values(self, key: str) -> np.ndarray:
        return np.array([s[key] for s in self.seeds.values()], dtype=np.float64)


def write_manifest(run_dir: Path, manifest: RunManifest) -> Path:
    """Atomic write: a run without manifest.json is incomplete."""
    path = run_dir / MANIFEST_NAME
    tmp = run_dir / (MANIFEST_NAME + ".tmp")
    tmp.write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True))
    os.replace(tmp, path)
    return path


def load_manifest(path) -> RunManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        data = json.loads(path.read_text())
        manifest = RunManifest(**data)
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise ManifestError(f"missing or corrupt manifest {path}: {exc}") from exc
    if not manifest.complete or not manifest.seeds:
        raise ManifestError(f"incomplete run manifest {path}")
    return manifest


def _seed_job(config_dict: dict, seed: int, seed_dir: str) -> SeedResult:
    return train_seed(config_from_dict(config_dict), seed, seed_dir)


def run_experiment(config: RunConfig, workers: int = 1, reuse: bool = False) -> RunManifest:
    """Train every seed of ``config`` and persist metrics, checkpoints and the manifest.

    With ``reuse=True`` an existing complete run with the same training hash
    and code version is returned instead of retraining.
    """
    run_dir = config.resolved_output_dir() / config.run_id
    manifest_path = run_dir / MANIFEST_NAME
    if manifest_path.exists():
        if reuse:
            try:
                old = load_manifest(manifest_path)
            except ManifestError:
                old = None
            if (
                old is not None
                and old.config_hash == config.training_hash()
                and old.code_version == code_version()
                and [int(s) for s in old.seeds] == list(config.seeds)
            ):
                return old
        else:
            raise ConfigError(f"run id {config.run_id!r} already exists in {run_dir.parent}")
    if run_dir.exists():
        shutil.rmtree(run_dir)
    run_dir.mkdir(parents=True)
    (run_dir / "config.toml").write_text(dumps_config(config))

    cfg_dict = config.to_dict()
    jobs = [(cfg_dict, s, str(run_dir / f"seed_{s}")) for s in config.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_seed_job, *zip(*jobs)))
    else:
        results = [_seed_job(*j) for j in jobs]

    files = ["config.toml"] + [f"seed_{r.seed}/{f}" for r in results for f in r.files]
    manifest = RunManifest(
        run_id=config.run_id,
        config=cfg_dict,
        config_hash=config.training_hash(),
        code_version=code_version(),
        method=method_label(config),
        seeds={str(r.seed): {k: v for k, v in asdict(r).items() if k not in ("seed", "files")} for r in results},
        files=files,
    )
    write_manifest(run_dir, manifest)
    return manifest

