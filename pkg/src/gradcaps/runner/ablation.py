"""Temporal-weight sweeps: one run per (regularizer kind, lambda_t)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import plotting
from .config import ConfigError, RunConfig
from .experiment import RunManifest, method_label, run_experiment
from .report import _std, read_trace

DEFAULT_GRID = (0.05, 0.1, 0.5, 1.0, 2.0, 3.0)
DEFAULT_KINDS = ("caps", "gradcaps_norm")
SWEEP_COLUMNS = ["kind", "method", "lambda_t", "run_id", "n_seeds", "mean_return", "std_return", "mean_fluctuation"]


@dataclass
class SweepReport:
    grid_text: str
    rows: list[dict]
    manifests: dict[tuple[str, float], RunManifest]
    files: list[Path] = field(default_factory=list)

    def returns(self, kind: str) -> dict[float, float]:
        return {r["lambda_t"]: r["mean_return"] for r in self.rows if r["kind"] == kind}

    def relative_spread(self, kind: str) -> float:
        """(max - min) / |mean| of the per-weight mean returns."""
        v = np.array(list(self.returns(kind).values()))
        return float((v.max() - v.min()) / abs(v.mean()))


def parse_grid(text) -> list[float]:
    """Accept "0.05,0.5 1.0" style strings or an iterable of numbers."""
    if isinstance(text, str):
        parts = text.replace(",", " ").split()
    else:
        parts = list(text)
    try:
        grid = [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"bad lambda grid {text!r}") from exc
    if not grid:
        raise ConfigError("lambda grid is empty")
    if any(g < 0 or not np.isfinite(g) for g in grid):
        raise ConfigError("lambda grid values must be finite and non-negative")
    if len(set(grid)) != len(grid):
        raise ConfigError("duplicate lambda values")
    return grid


def sweep_run_id(base: str, kind: str, lam: float) -> str:
    return f"{base}-{kind}-lam{lam:g}"


def ablate_lambda(
    config: RunConfig,
    grid=DEFAULT_GRID,
    kinds=DEFAULT_KINDS,
    workers: int = 1,
    reuse: bool = False,
    grid_text: str | None = None,
) -> SweepReport:
    values = parse_grid(grid)
    if grid_text is None:
        grid_text = grid if isinstance(grid, str) else ",".join(repr(float(g)) for g in values)
    manifests = {}
    for kind in kinds:
        for lam in values:
            cfg = config.with_regularizer(kind=kind, lambda_t=lam).replace(run_id=sweep_run_id(config.run_id, kind, lam))
            manifests[(kind, lam)] = run_experiment(cfg, workers=workers, reuse=reuse)

    rows = []
    for (kind, lam), m in manifests.items():
        ret = m.seed_values("final_mean_return")
        rows.append(
            {
                "kind": kind,
                "method": m.method,
                "lambda_t": lam,
                "run_id": m.run_id,
                "n_seeds": len(ret),
                "mean_return": float(ret.mean()),
                "std_return": _std(ret),
                "mean_fluctuation": float(m.seed_values("final_fluctuation").mean()),
            }
        )
    report = SweepReport(grid_text, rows, manifests)
    report.files = _write_outputs(config, report)
    return report


def _write_outputs(config: RunConfig, report: SweepReport) -> list[Path]:
    root = config.resolved_output_dir()
    out = root / f"{config.run_id}-ablation"
    out.mkdir(parents=True, exist_ok=True)
    files = []

    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        fh.write(f"# lambda grid: {report.grid_text}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in report.rows:
            w.writerow([f"{r[c]:.6g}" if isinstance(r[c], float) else r[c] for c in SWEEP_COLUMNS])
    files.append(path)

    # first-seed evaluation trace of each run, stacked by weight
    stacked = {}
    reference = None
    for (kind, lam), m in report.manifests.items():
        seed = next(iter(m.seeds))
        ref, act = read_trace(root / m.run_id / f"seed_{seed}" / "trace.csv")
        reference = ref if reference is None else reference
        stacked.setdefault(kind, {})[lam] = act
    path = out / "stacked_traces.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "lambda_t", "t", "reference", "action"])
        for kind, by_lam in stacked.items():
            for lam, act in by_lam.items():
                w.writerows([kind, f"{lam:g}", t + 1, f"{reference[t]:.6g}", f"{a:.6g}"] for t, a in enumerate(act))
    files.append(path)

    for kind, by_lam in stacked.items():
        label = method_label(config.with_regularizer(kind=kind))
        fig = plotting.stacked_traces_figure(reference, by_lam, f"{label}: predicted trajectory per weight")
        files += plotting.save(fig, out / f"stacked_{kind}")

    index = out / "sweep.json"
    index.write_text(
        json.dumps(
            {
                "grid": report.grid_text,
                "runs": [r["run_id"] for r in report.rows],
                "relative_spread": {k: report.relative_spread(k) for k in stacked},
                "files": [f.name for f in files],
            },
            indent=2,
        )
    )
    files.append(index)
    return files
