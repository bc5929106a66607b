"""Matplotlib styling and the figure builders used by reports.

Figures are written as SVG (deterministic: no timestamp, fixed hash salt) and
PNG next to the CSV files that hold the plotted data.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "svg.hashsalt": "gradcaps",
    "savefig.bbox": "tight",
}

COLORS = {"Reference": "0.55", "Vanilla": "#1f77b4", "CAPS": "#d62728", "Grad-CAPS": "#2ca02c", "Grad-CAPS-raw": "#9467bd"}


def color(label: str) -> str:
    return COLORS.get(label, "#ff7f0e")


def save(fig, path, formats=("svg", "png")) -> list[Path]:
    """Save ``fig`` as ``path.<fmt>`` for each format; returns written paths."""
    path = Path(path)
    written = []
    # the hash salt is read at save time, so the style must be active here too
    with plt.rc_context(STYLE):
        for fmt in formats:
            out = path.with_suffix("." + fmt)
            meta = {"Date": None} if fmt == "svg" else {}
            fig.savefig(out, format=fmt, metadata=meta, dpi=150)
            written.append(out)
    plt.close(fig)
    return written


def overlay_figure(reference: np.ndarray, traces: dict[str, np.ndarray], title: str = ""):
    """Reference signal vs predicted trajectories, one line per method."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.0))
        t = np.arange(1, len(reference) + 1)
        ax.plot(t, reference, color=color("Reference"), lw=2.0, ls="--", label="Reference")
        for label, actions in traces.items():
            ax.plot(t[: len(actions)], actions, color=color(label), label=label)
        ax.set_xlabel("step")
        ax.set_ylabel("position")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper center", bbox_to_anchor=(0.5, -0.2), ncol=len(traces) + 1, frameon=False)
    return fig


def curves_figure(curves: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]], ylabel: str):
    """Mean +- std across seeds against environment step, per method."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for label, (x, mean, std) in curves.items():
            ax.plot(x, mean, color=color(label), label=label)
            ax.fill_between(x, mean - std, mean + std, color=color(label), alpha=0.2, lw=0)
        ax.set_xlabel("environment step")
        ax.set_ylabel(ylabel)
        ax.legend(frameon=False)
    return fig


def stacked_traces_figure(reference: np.ndarray, traces: dict[float, np.ndarray], title: str):
    """Predicted waves stacked along a weight axis in 3-D, reference at the back."""
    with plt.rc_context(STYLE):
        fig = plt.figure(figsize=(5.0, 3.6))
        ax = fig.add_subplot(projection="3d")
        weights = sorted(traces)
        t = np.arange(1, len(reference) + 1)
        for i, lam in enumerate(weights):
            ax.plot(t, np.full_like(t, i, dtype=float), traces[lam], lw=1.0)
        ax.plot(t, np.full_like(t, len(weights), dtype=float), reference, color=color("Reference"), ls="--")
        ax.set_yticks(range(len(weights) + 1))
        ax.set_yticklabels([f"{w:g}" for w in weights] + ["ref"])
        ax.set_xlabel("step")
        ax.set_ylabel("temporal weight")
        ax.set_zlabel("position")
        ax.set_title(title)
    return fig
