"""Command line entry point.

Exit status: 0 on success, 1 for bad configuration or input, 2 when a run aborts.
Set GRADCAPS_OUTPUT_ROOT to redirect every run directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .nn import NonFiniteError
from .runner.ablation import DEFAULT_GRID, DEFAULT_KINDS, ablate_lambda
from .runner.config import OUTPUT_ROOT_ENV, ConfigError, load_config
from .runner.experiment import ManifestError, build_env, load_checkpoint, make_rng, run_experiment
from .runner.inspect import InputError, format_table, loss_table, read_sequences
from .runner.report import TABLE_COLUMNS, ReportError, emit_report, load_runs
from .agents.common import TrainingAborted
from .metrics import evaluate

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2


def _print_rows(header, rows, out=None) -> None:
    w = csv.writer(out or sys.stdout, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in r])


def cmd_train(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.replace(seeds=(args.seed,))
    if args.run_id:
        config = config.replace(run_id=args.run_id)
    m = run_experiment(config, workers=args.workers, reuse=args.reuse)
    run_dir = config.resolved_output_dir() / config.run_id
    _print_rows(
        ["run_id", "method", "seed", "best_step", "best_return", "final_mean_return", "final_fluctuation", "wall_time"],
        [
            [m.run_id, m.method, s, v["best_step"], v["best_return"], v["final_mean_return"], v["final_fluctuation"], v["wall_time"]]
            for s, v in m.seeds.items()
        ],
    )
    print(f"# run directory: {run_dir}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    policy, config, payload = load_checkpoint(args.checkpoint)
    env = build_env(config)
    seed = payload.get("seed", 0) if args.seed is None else args.seed
    ev = evaluate(policy, env, args.episodes, make_rng(seed, "eval"))
    _print_rows(["episode", "return", "fluctuation"], [[i, t.ret, _fluct(t)] for i, t in enumerate(ev.traces)])
    print(
        f"# mean_return={ev.mean_return:.6g} std_return={ev.std_return:.6g} "
        f"fluctuation={ev.fluctuation:.6g} checkpoint_step={payload.get('step')}"
    )
    return EXIT_OK


def _fluct(trace) -> float:
    return float(np.mean(np.linalg.norm(np.diff(trace.actions, axis=0), axis=1)))


def cmd_ablate(args) -> int:
    config = load_config(args.config)
    if args.seeds:
        config = config.replace(seeds=tuple(args.seeds))
    grid_text = " ".join(args.grid) if args.grid else ",".join(f"{g:g}" for g in DEFAULT_GRID)
    rep = ablate_lambda(config, grid_text, kinds=args.kinds, workers=args.workers, reuse=args.reuse, grid_text=grid_text)
    print(f"# lambda grid: {rep.grid_text}")
    cols = ["kind", "lambda_t", "n_seeds", "mean_return", "std_return", "mean_fluctuation"]
    _print_rows(cols, [[r[c] for c in cols] for r in rep.rows])
    for kind in args.kinds:
        print(f"# relative_spread[{kind}]={rep.relative_spread(kind):.6g}")
    print(f"# outputs: {rep.files[0].parent}", file=sys.stderr)
    return EXIT_OK


def cmd_inspect(args) -> int:
    seqs = read_sequences(args.input, dim=args.dim)
    rows = loss_table(seqs, kind=args.kind, mode=args.mode, aggregation=args.aggregation, eps=args.eps)
    sys.stdout.write(format_table(rows, kind=args.kind, mode=args.mode))
    for r in rows:
        for key, note in r.items():
            if key.endswith("_note"):
                print(f"# sequence {r['sequence']}: {key[:-5]} undefined ({note})", file=sys.stderr)
    return EXIT_OK


def cmd_report(args) -> int:
    runs = load_runs(args.runs)
    root = os.environ.get(OUTPUT_ROOT_ENV) or "runs"
    out = Path(args.out) if args.out else Path(root) / "report"
    rep = emit_report(runs, out, figures=not args.no_figures)
    _print_rows(TABLE_COLUMNS, [[r[c] for c in TABLE_COLUMNS] for r in rep.rows])
    for f in rep.files:
        print(f"# wrote {f}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gradcaps", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log evaluation progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train every seed of a config and write a run manifest")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, help="train only this seed")
    t.add_argument("--run-id", help="override the config's run_id")
    t.add_argument("--workers", type=int, default=1)
    t.add_argument("--reuse", action="store_true", help="return an existing matching run instead of failing")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a saved best-policy checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, help="evaluation seed (defaults to the training seed)")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate-lambda", help="sweep lambda_t for CAPS and Grad-CAPS")
    a.add_argument("--config", required=True)
    a.add_argument("--grid", nargs="+", help='weights, e.g. --grid 0.05 0.5 1 3 or --grid "0.05,0.5"')
    a.add_argument("--kinds", nargs="+", default=list(DEFAULT_KINDS))
    a.add_argument("--seeds", type=int, nargs="+")
    a.add_argument("--workers", type=int, default=1)
    a.add_argument("--reuse", action="store_true")
    a.set_defaults(func=cmd_ablate)

    i = sub.add_parser("loss-inspect", help="tabulate smoothness losses of action sequences from a CSV")
    i.add_argument("--input", required=True, help="one sequence per row; '-' reads stdin")
    i.add_argument("--mode", choices=["both", "tanh", "division"], default="both")
    i.add_argument("--kind", choices=["all", "caps", "gradcaps_raw", "gradcaps_norm"], default="all")
    i.add_argument("--aggregation", choices=["sqrt_sum_sq", "mean"], default="sqrt_sum_sq")
    i.add_argument("--eps", type=float, help="denominator guard (default 0 for division, 1e-3 for tanh)")
    i.add_argument("--dim", type=int, default=1, help="action dimension; rows are flattened (T, dim)")
    i.set_defaults(func=cmd_inspect)

    r = sub.add_parser("report", help="comparison table, overlay data and figures for finished runs")
    r.add_argument("--runs", nargs="+", required=True, help="run directories, manifests, or parents of runs")
    r.add_argument("--out", help="output directory (default <output root>/report)")
    r.add_argument("--no-figures", action="store_true")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    if getattr(args, "input", None) == "-":
        args.input = io.StringIO(sys.stdin.read())
    try:
        return args.func(args)
    except (ConfigError, InputError, ManifestError, ReportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingAborted, NonFiniteError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
