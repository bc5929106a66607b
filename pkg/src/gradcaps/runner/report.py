"""Comparison tables, overlay data and figures from completed runs."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import plotting
from .experiment import MANIFEST_NAME, ManifestError, RunManifest, load_manifest

TABLE_COLUMNS = [
    "run_id",
    "method",
    "algorithm",
    "regularizer",
    "lambda_t",
    "n_seeds",
    "mean_return",
    "std_return",
    "mean_fluctuation",
    "std_fluctuation",
    "lipschitz_k1",
    "lipschitz_k2",
]


class ReportError(ValueError):
    pass


def _std(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.std(x - x[0], ddof=1)) if len(x) > 1 else 0.0


def pooled_std(a, b) -> float:
    """Root mean of the two across-seed variances."""
    return float(np.sqrt((_std(a) ** 2 + _std(b) ** 2) / 2.0))


def summarize(manifest: RunManifest) -> dict:
    cfg = manifest.config
    ret = manifest.seed_values("final_mean_return")
    fl = manifest.seed_values("final_fluctuation")
    reg = cfg["regularizer"]
    return {
        "run_id": manifest.run_id,
        "method": manifest.method,
        "algorithm": ("ddpg" if cfg["agent"].get("ddpg") else cfg["agent"]["algorithm"]),
        "regularizer": reg["kind"],
        # kind "none" ignores its weight; report the weight that actually applied
        "lambda_t": 0.0 if reg["kind"] == "none" else reg["lambda_t"],
        "n_seeds": len(ret),
        "mean_return": float(ret.mean()),
        "std_return": _std(ret),
        "mean_fluctuation": float(fl.mean()),
        "std_fluctuation": _std(fl),
        "lipschitz_k1": float(manifest.seed_values("lipschitz_k1").mean()),
        "lipschitz_k2": float(manifest.seed_values("lipschitz_k2").mean()),
    }


def check_comparable(manifests) -> None:
    envs = {json.dumps(m.config["env"], sort_keys=True) for m in manifests}
    if len(envs) > 1:
        raise ReportError(f"runs use different environment specs: {sorted(envs)}")


def read_trace(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ReportError(f"empty trace {path}")
    return np.array([float(r["reference"]) for r in rows]), np.array([float(r["action_0"]) for r in rows])


def read_metrics(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]} if rows else {}


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else v


@dataclass
class Report:
    rows: list[dict]
    files: list[Path]


def load_runs(paths) -> list[tuple[Path, RunManifest]]:
    """Accept run directories, manifest files, or parent dirs containing runs."""
    found = []
    for p in map(Path, paths):
        if p.is_file():
            found.append((p.parent, load_manifest(p)))
        elif (p / MANIFEST_NAME).exists():
            found.append((p, load_manifest(p)))
        elif p.is_dir():
            subs = sorted(d for d in p.iterdir() if (d / MANIFEST_NAME).exists())
            if not subs:
                raise ManifestError(f"no completed runs under {p}")
            found.extend((d, load_manifest(d)) for d in subs)
        else:
            raise ManifestError(f"missing run {p}")
    if not found:
        raise ReportError("no runs given")
    return found


def emit_report(runs, out_dir, figures: bool = True) -> Report:
    """Write comparison.csv, overlay.csv, curves.csv and figures for comparable runs.

    ``runs`` is a list of ``(run_dir, manifest)`` pairs or of paths accepted by
    :func:`load_runs`.
    """
    if runs and not isinstance(runs[0], tuple):
        runs = load_runs(runs)
    if not runs:
        raise ReportError("need at least one manifest")
    manifests = [m for _, m in runs]
    check_comparable(manifests)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []

    rows = [summarize(m) for m in manifests]
    path = out_dir / "comparison.csv"
    _write_rows(path, TABLE_COLUMNS, [[_fmt(r[c]) for c in TABLE_COLUMNS] for r in rows])
    files.append(path)

    # overlay of the first seed's evaluation trace per run
    traces, reference = {}, None
    for run_dir, m in runs:
        seed = next(iter(m.seeds))
        ref, act = read_trace(run_dir / f"seed_{seed}" / "trace.csv")
        reference = ref if reference is None else reference
        traces[m.run_id] = act
    path = out_dir / "overlay.csv"
    ids = list(traces)
    _write_rows(
        path,
        ["t", "reference", *ids],
        [[t + 1, _fmt(float(reference[t])), *(_fmt(float(traces[i][t])) for i in ids)] for t in range(len(reference))],
    )
    files.append(path)

    curves = {}
    for run_dir, m in runs:
        per_seed = [read_metrics(run_dir / f"seed_{s}" / "metrics.csv") for s in m.seeds]
        steps = per_seed[0]["step"]
        n = min(len(p["step"]) for p in per_seed)
        ret = np.stack([p["eval_mean_return"][:n] for p in per_seed])
        fl = np.stack([p["action_fluctuation"][:n] for p in per_seed])
        curves[m.run_id] = (steps[:n], ret, fl)
    path = out_dir / "curves.csv"
    _write_rows(
        path,
        ["run_id", "step", "mean_return", "std_return", "mean_fluctuation"],
        [
            [rid, int(x[j]), _fmt(float(r[:, j].mean())), _fmt(_std(r[:, j])), _fmt(float(f[:, j].mean()))]
            for rid, (x, r, f) in curves.items()
            for j in range(len(x))
        ],
    )
    files.append(path)

    if figures:
        labels = {m.run_id: (m.method if [x.method for x in manifests].count(m.method) == 1 else m.run_id) for m in manifests}
        env = manifests[0].config["env"]
        title = f"{env.get('kind', env['name'])} {env['name']}"
        fig = plotting.overlay_figure(reference, {labels[k]: v for k, v in traces.items()}, title)
        files += plotting.save(fig, out_dir / "overlay")
        for key, idx, ylabel in (("return", 1, "evaluation return"), ("fluctuation", 2, "action fluctuation, mean ||a_t - a_{t-1}|| (unscaled)")):
            data = {
                labels[rid]: (c[0], c[idx].mean(axis=0), np.array([_std(c[idx][:, j]) for j in range(len(c[0]))]))
                for rid, c in curves.items()
            }
            files += plotting.save(plotting.curves_figure(data, ylabel), out_dir / f"curves_{key}")

    index = out_dir / "report.json"
    index.write_text(json.dumps({"runs": [m.run_id for m in manifests], "files": [f.name for f in files]}, indent=2))
    files.append(index)
    return Report(rows, files)
