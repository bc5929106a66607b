"""Runner, config, report, ablation and CLI behaviour on tiny runs (seconds each)."""

import csv
import json
import os
from pathlib import Path

import numpy as np
import pytest

from gradcaps import cli
from gradcaps.agents.common import TrainingAborted
from gradcaps.runner import ablation, report
from gradcaps.runner.config import (
    OUTPUT_ROOT_ENV,
    ConfigError,
    config_from_dict,
    dumps_config,
    load_config,
    save_config,
)
from gradcaps.runner.experiment import (
    MANIFEST_NAME,
    ManifestError,
    load_checkpoint,
    load_manifest,
    run_experiment,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def tiny(tmp_path, **over):
    d = {
        "run_id": "tiny",
        "output_dir": str(tmp_path),
        "total_steps": 300,
        "eval_interval": 150,
        "eval_episodes": 2,
        "seeds": [0],
        "env": {"name": "wave", "kind": "cosine", "period": 10, "episode_length": 40},
        "agent": {"hidden": [8, 8], "batch_size": 16, "warmup_steps": 100},
        "regularizer": {"kind": "gradcaps_norm"},
    }
    for k, v in over.items():
        if isinstance(v, dict) and v.get("name") != "pendulum":
            d[k] = {**d[k], **v}
        else:
            d[k] = v
    return config_from_dict(d)


# --- config --------------------------------------------------------------------


@pytest.mark.parametrize("path", sorted(CONFIGS.rglob("*.toml")) + sorted(CONFIGS.rglob("*.json")), ids=lambda p: p.name)
def test_shipped_configs_round_trip(path, tmp_path):
    cfg = load_config(path)
    for suffix in (".toml", ".json"):
        out = tmp_path / f"c{suffix}"
        save_config(cfg, out)
        again = load_config(out)
        assert again == cfg
        assert again.to_dict() == cfg.to_dict()


def test_round_trip_preserves_fields(tmp_path):
    cfg = tiny(tmp_path, regularizer={"kind": "caps", "lambda_t": 0.25, "epsilon": 0.01})
    assert load_config_text(dumps_config(cfg), tmp_path) == cfg


def load_config_text(text, tmp_path):
    p = tmp_path / "x.toml"
    p.write_text(text)
    return load_config(p)


@pytest.mark.parametrize(
    "bad",
    [
        {"bogus": 1},
        {"regularizer": {"kind": "l2"}},
        {"regularizer": {"epsilon": 0.0}},
        {"regularizer": {"lambda_s": 1.0, "spatial_sigma": 0.0}},
        {"agent": {"gamma": 1.0}},
        {"agent": {"algorithm": "ppo"}},
        {"env": {"name": "cartpole"}},
        {"env": {"period": 1}},
        {"total_steps": 50},
        {"seeds": []},
        {"seeds": [1, 1]},
        {"run_id": "a/b"},
    ],
)
def test_invalid_configs_rejected(bad, tmp_path):
    with pytest.raises(ConfigError):
        tiny(tmp_path, **bad)


def test_unparseable_file(tmp_path):
    p = tmp_path / "broken.toml"
    p.write_text("run_id = [")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_training_hash_ignores_bookkeeping(tmp_path):
    a = tiny(tmp_path)
    assert a.training_hash() == a.replace(run_id="other", seeds=(4, 5), output_dir="/x").training_hash()
    assert a.training_hash() != a.with_regularizer(lambda_t=0.5).training_hash()


# --- run_experiment ------------------------------------------------------------


def read_bytes(run_dir, name="metrics.csv", seed=0):
    return (Path(run_dir) / f"seed_{seed}" / name).read_bytes()


def test_same_config_twice_is_byte_identical(tmp_path):
    a = tiny(tmp_path / "a")
    b = tiny(tmp_path / "b")
    run_experiment(a)
    run_experiment(b)
    for name in ("metrics.csv", "trace.csv", "final_eval.csv"):
        assert read_bytes(tmp_path / "a" / "tiny", name) == read_bytes(tmp_path / "b" / "tiny", name)
    # checkpoints embed their config (including output_dir), so compare the weights
    ca, cb = (json.loads(read_bytes(tmp_path / d / "tiny", "best_policy.json")) for d in "ab")
    assert ca["policy"] == cb["policy"] and ca["step"] == cb["step"]


def test_manifest_lists_every_file(tmp_path):
    cfg = tiny(tmp_path, seeds=[0, 3])
    m = run_experiment(cfg)
    run_dir = tmp_path / "tiny"
    on_disk = {str(p.relative_to(run_dir)) for p in run_dir.rglob("*") if p.is_file()}
    assert on_disk == set(m.files) | {MANIFEST_NAME}
    assert set(m.seeds) == {"0", "3"}
    loaded = load_manifest(run_dir)
    assert loaded == m
    with open(run_dir / "seed_3" / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["step"]) for r in rows] == [150, 300]
    assert list(rows[0]) == [
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


def test_warmup_only_run_has_random_policy_metrics(tmp_path):
    cfg = tiny(tmp_path, total_steps=100, eval_interval=50)
    m = run_experiment(cfg)
    with open(tmp_path / "tiny" / "seed_0" / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    assert all(float(r[k]) == 0.0 for r in rows for k in ("actor_loss", "critic_loss", "temporal_loss"))
    assert np.isfinite(m.seed_values("final_mean_return")).all()


def test_existing_run_id_rejected_unless_reused(tmp_path):
    cfg = tiny(tmp_path)
    first = run_experiment(cfg)
    with pytest.raises(ConfigError):
        run_experiment(cfg)
    assert run_experiment(cfg, reuse=True) == first


def test_reuse_retrains_when_config_changed(tmp_path):
    cfg = tiny(tmp_path)
    run_experiment(cfg)
    changed = cfg.with_regularizer(lambda_t=0.5)
    m = run_experiment(changed, reuse=True)
    assert m.config_hash == changed.training_hash()


def test_partial_run_is_detected(tmp_path):
    cfg = tiny(tmp_path)
    run_experiment(cfg)
    path = tmp_path / "tiny" / MANIFEST_NAME
    data = json.loads(path.read_text())
    data["complete"] = False
    path.write_text(json.dumps(data))
    with pytest.raises(ManifestError):
        load_manifest(path)
    path.write_text("{")
    with pytest.raises(ManifestError):
        load_manifest(path)


def test_output_root_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "elsewhere"))
    cfg = tiny(tmp_path / "ignored")
    run_experiment(cfg)
    assert (tmp_path / "elsewhere" / "tiny" / MANIFEST_NAME).exists()
    assert not (tmp_path / "ignored").exists()


def test_checkpoint_round_trip(tmp_path):
    cfg = tiny(tmp_path)
    m = run_experiment(cfg)
    policy, cfg2, payload = load_checkpoint(tmp_path / "tiny" / "seed_0" / "best_policy.json")
    assert cfg2 == cfg
    assert payload["step"] == m.seeds["0"]["best_step"]
    assert payload["config_hash"] == cfg.training_hash()
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "tiny" / "config.toml")


@pytest.mark.parametrize("algorithm", ["td3", "ddpg"])
def test_td3_paths_train(tmp_path, algorithm):
    agent = {"algorithm": "td3", "ddpg": algorithm == "ddpg"}
    m = run_experiment(tiny(tmp_path, agent=agent, regularizer={"kind": "caps"}))
    assert m.method == "CAPS"
    assert np.isfinite(m.seed_values("final_mean_return")).all()


def test_pendulum_trains(tmp_path):
    cfg = tiny(tmp_path, env={"name": "pendulum", "episode_length": 40})
    m = run_experiment(cfg)
    assert m.config["env"]["name"] == "pendulum"


def test_pendulum_env_section_is_validated(tmp_path):
    with pytest.raises(ConfigError):
        tiny(tmp_path, env={"name": "pendulum", "kind": "cosine"})


# --- report --------------------------------------------------------------------


@pytest.fixture(scope="module")
def three_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    base = tiny(root, seeds=[0, 1])
    for kind in ("none", "caps", "gradcaps_norm"):
        run_experiment(base.with_regularizer(kind=kind).replace(run_id=f"r-{kind}"))
    return root


def test_report_single_manifest_one_row(three_runs, tmp_path):
    rep = report.emit_report([three_runs / "r-none"], tmp_path / "rep")
    assert len(rep.rows) == 1
    with open(tmp_path / "rep" / "comparison.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1 and rows[0]["method"] == "Vanilla"


def test_report_three_methods(three_runs, tmp_path):
    rep = report.emit_report([three_runs], tmp_path / "rep")
    assert {r["method"] for r in rep.rows} == {"Vanilla", "CAPS", "Grad-CAPS"}
    names = {f.name for f in rep.files}
    for stem in ("overlay", "curves_return", "curves_fluctuation"):
        assert {f"{stem}.svg", f"{stem}.png"} <= names
    for f in rep.files:
        assert f.exists() and f.stat().st_size > 0
    with open(tmp_path / "rep" / "overlay.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["t", "reference", "r-caps", "r-gradcaps_norm", "r-none"]
    for r in rep.rows:
        m = load_manifest(three_runs / r["run_id"])
        ret = m.seed_values("final_mean_return")
        assert r["mean_return"] == pytest.approx(ret.mean())
        assert r["std_return"] == pytest.approx(np.std(ret, ddof=1), abs=1e-12)


def test_report_svg_is_deterministic(three_runs, tmp_path):
    report.emit_report([three_runs], tmp_path / "a")
    report.emit_report([three_runs], tmp_path / "b")
    assert (tmp_path / "a" / "overlay.svg").read_bytes() == (tmp_path / "b" / "overlay.svg").read_bytes()


def test_report_rejects_mixed_env_specs(three_runs, tmp_path):
    other = tiny(tmp_path, env={"kind": "square"}, run_id="sq")
    run_experiment(other)
    with pytest.raises(report.ReportError):
        report.emit_report([three_runs / "r-none", tmp_path / "sq"], tmp_path / "rep")


def test_report_missing_manifest(tmp_path):
    with pytest.raises(ManifestError):
        report.load_runs([tmp_path / "nothing"])


def test_pooled_std():
    assert report.pooled_std([1.0, 3.0], [2.0, 2.0]) == pytest.approx(np.sqrt(2.0 / 2))
    assert report.pooled_std([5.0], [1.0]) == 0.0


# --- ablation ------------------------------------------------------------------


def test_ablation_single_weight_matches_run_experiment(tmp_path):
    cfg = tiny(tmp_path / "sweep", run_id="abl")
    rep = ablation.ablate_lambda(cfg, "1.0")
    assert len(rep.rows) == 2
    for kind in ("caps", "gradcaps_norm"):
        direct = run_experiment(
            cfg.with_regularizer(kind=kind, lambda_t=1.0).replace(output_dir=str(tmp_path / "direct"), run_id=kind)
        )
        a = read_bytes(tmp_path / "sweep" / f"abl-{kind}-lam1")
        b = read_bytes(tmp_path / "direct" / direct.run_id)
        assert a == b
    header = (tmp_path / "sweep" / "abl-ablation" / "sweep.csv").read_text().splitlines()[0]
    assert header == "# lambda grid: 1.0"


def test_ablation_grid_logged_verbatim(tmp_path):
    cfg = tiny(tmp_path, run_id="g", total_steps=100, eval_interval=100)
    rep = ablation.ablate_lambda(cfg, "0.05, 3", kinds=("caps",))
    assert rep.grid_text == "0.05, 3"
    text = (tmp_path / "g-ablation" / "sweep.csv").read_text()
    assert text.startswith("# lambda grid: 0.05, 3\n")
    assert {f.name for f in rep.files} >= {"stacked_traces.csv", "stacked_caps.svg", "stacked_caps.png"}
    assert set(rep.returns("caps")) == {0.05, 3.0}


@pytest.mark.parametrize("grid", ["", "a,b", "-1", "1,1"])
def test_ablation_bad_grid(grid):
    with pytest.raises(ConfigError):
        ablation.parse_grid(grid)


# --- CLI -----------------------------------------------------------------------


def test_cli_loss_inspect(tmp_path, capsys):
    p = tmp_path / "seq.csv"
    p.write_text("-1,1,-1,1,-1,1\n0,2,4,6,8,10\n")
    assert cli.main(["loss-inspect", "--input", str(p), "--mode", "tanh"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert float(rows[0]["caps_sq"]) == pytest.approx(20.0, rel=1e-12)
    assert float(rows[0]["gradcaps_raw_sq"]) == pytest.approx(64.0, rel=1e-12)
    assert float(rows[1]["gradcaps_raw"]) == 0.0


def test_cli_loss_inspect_bad_input(tmp_path, capsys):
    p = tmp_path / "seq.csv"
    p.write_text("1,2\n")
    assert cli.main(["loss-inspect", "--input", str(p)]) == 1
    p.write_text("1,x,3\n")
    assert cli.main(["loss-inspect", "--input", str(p)]) == 1


def write_tiny(tmp_path, **over):
    cfg = tiny(tmp_path / "out", **over)
    path = tmp_path / "cfg.toml"
    save_config(cfg, path)
    return path


def test_cli_train_eval_report(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
    cfg = write_tiny(tmp_path)
    assert cli.main(["train", "--config", str(cfg), "--seed", "2"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("run_id,method,seed") and ",2," in out
    ckpt = tmp_path / "out" / "tiny" / "seed_2" / "best_policy.json"
    assert cli.main(["eval", "--checkpoint", str(ckpt), "--episodes", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "episode,return,fluctuation" and len(out) == 5
    assert cli.main(["report", "--runs", str(tmp_path / "out" / "tiny"), "--out", str(tmp_path / "rep")]) == 0
    assert (tmp_path / "rep" / "overlay.svg").exists()
    # a second train with the same run id is a configuration error
    assert cli.main(["train", "--config", str(cfg), "--seed", "2"]) == 1


def test_cli_output_root_env(tmp_path, capsys, monkeypatch):
    cfg = write_tiny(tmp_path)
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    assert cli.main(["train", "--config", str(cfg)]) == 0
    assert (tmp_path / "root" / "tiny" / MANIFEST_NAME).exists()
    assert cli.main(["report", "--runs", str(tmp_path / "root" / "tiny")]) == 0
    assert (tmp_path / "root" / "report" / "comparison.csv").exists()


def test_cli_ablate(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
    cfg = write_tiny(tmp_path, total_steps=100, eval_interval=100)
    assert cli.main(["ablate-lambda", "--config", str(cfg), "--grid", "0.05", "3.0"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# lambda grid: 0.05 3.0\n")
    assert "relative_spread[caps]" in out


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    bad = tmp_path / "bad.toml"
    bad.write_text('[regularizer]\nkind = "nope"\n')
    assert cli.main(["train", "--config", str(bad)]) == 1
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "none.json")]) == 1
    assert cli.main(["report", "--runs", str(tmp_path)]) == 1

    def boom(*a, **k):
        raise TrainingAborted("non-finite critic loss", {"step": 7})

    monkeypatch.setattr(cli, "run_experiment", boom)
    assert cli.main(["train", "--config", str(write_tiny(tmp_path))]) == 2
    assert "aborted" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    p = tmp_path / "seq.csv"
    p.write_text("0,15,5\n")
    res = subprocess.run(
        [sys.executable, "-m", "gradcaps", "loss-inspect", "--input", str(p), "--mode", "division"],
        capture_output=True,
        text=True,
        env={**os.environ},
    )
    assert res.returncode == 0
    row = res.stdout.splitlines()[1].split(",")
    assert row[2:] == ["18.027756377319946", "325.0", "25.0", "625.0", "5.0", "25.0"]
