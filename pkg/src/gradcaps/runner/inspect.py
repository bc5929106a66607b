"""Tabulate smoothness losses for action sequences read from CSV (one sequence per row)."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .. import smoothness as sm

COLUMNS = {
    "caps": ("caps", "tanh"),
    "gradcaps_raw": ("gradcaps_raw", "tanh"),
    "gradcaps_division": ("gradcaps_norm", "division"),
    "gradcaps_tanh": ("gradcaps_norm", "tanh"),
}


class InputError(ValueError):
    pass


def read_sequences(path, dim: int = 1) -> list[np.ndarray]:
    """Rows of comma-separated numbers; with ``dim > 1`` each row is flattened (T, dim)."""
    text = Path(path).read_text() if not isinstance(path, io.StringIO) else path.getvalue()
    seqs = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        cells = [c.strip() for c in row if c.strip()]
        if not cells or cells[0].startswith("#"):
            continue
        try:
            values = np.array([float(c) for c in cells])
        except ValueError as exc:
            raise InputError(f"line {lineno}: non-numeric value ({exc})") from exc
        if len(values) % dim:
            raise InputError(f"line {lineno}: {len(values)} values do not split into actions of dim {dim}")
        seq = values.reshape(-1, dim)
        if len(seq) < 3:
            raise InputError(f"line {lineno}: sequence needs at least 3 actions, got {len(seq)}")
        seqs.append(seq)
    if not seqs:
        raise InputError("no sequences in input")
    return seqs


def columns_for(kind: str = "all", mode: str = "both") -> list[str]:
    if kind not in ("all", "caps", "gradcaps_raw", "gradcaps_norm"):
        raise InputError(f"unknown kind {kind!r}")
    if mode not in ("both", "tanh", "division"):
        raise InputError(f"unknown mode {mode!r}")
    cols = []
    if kind in ("all", "caps"):
        cols.append("caps")
    if kind in ("all", "gradcaps_raw"):
        cols.append("gradcaps_raw")
    if kind in ("all", "gradcaps_norm"):
        if mode in ("both", "division"):
            cols.append("gradcaps_division")
        if mode in ("both", "tanh"):
            cols.append("gradcaps_tanh")
    return cols


def loss_table(seqs, kind="all", mode="both", aggregation="sqrt_sum_sq", eps=None) -> list[dict]:
    """One dict per sequence: aggregate loss per column, plus its square (``<col>_sq``).

    ``eps`` defaults to 0 for the division form and 1e-3 for the tanh form.
    """
    rows = []
    for i, seq in enumerate(seqs):
        row = {"sequence": i, "length": len(seq)}
        for col in columns_for(kind, mode):
            k, m = COLUMNS[col]
            e = eps if eps is not None else (0.0 if m == "division" else 1e-3)
            try:
                steps = sm.step_losses(seq, k, mode=m, eps=e)
            except ValueError as exc:
                if m != "division":
                    raise
                row[col] = row[f"{col}_sq"] = float("nan")
                row[f"{col}_note"] = str(exc)
                continue
            row[col] = sm.aggregate(steps, aggregation)
            # for sqrt_sum_sq the square is the plain sum, computed without a round trip through sqrt
            row[f"{col}_sq"] = float(np.sum(steps**2)) if aggregation == "sqrt_sum_sq" else row[col] ** 2
        rows.append(row)
    return rows


def format_table(rows, kind="all", mode="both") -> str:
    cols = columns_for(kind, mode)
    header = ["sequence", "length"] + [c for col in cols for c in (col, f"{col}_sq")]
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        # shortest round-trip repr keeps full double precision
        w.writerow([r[h] if isinstance(r[h], int) else repr(float(r[h])) for h in header])
    return out.getvalue()
