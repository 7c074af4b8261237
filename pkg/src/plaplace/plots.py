"""Deterministic matplotlib figure emission for harness reports.

Figures are rendered headless to SVG with a fixed hash salt and stripped
creation metadata, so regenerating from the same report data is byte-identical.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "svg.hashsalt": "plaplace",
    "figure.figsize": (6.0, 3.8),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def save_figure(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # the hash salt is consulted at save time; without it element ids are
    # derived from the process-random figure identity
    with plt.rc_context({"svg.hashsalt": _STYLE["svg.hashsalt"]}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def energy_convergence_figure(histories: list[list[float]], labels: list[str] | None = None):
    """Energy descent curves, shifted to the final value so log decay is visible."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for k, hist in enumerate(histories):
            if not hist:
                continue
            shifted = [h - hist[-1] for h in hist]
            floor = max(max((abs(s) for s in shifted), default=0.0) * 1e-16, 1e-300)
            ax.semilogy(
                [max(s, floor) for s in shifted],
                label=None if labels is None else labels[k],
                linewidth=1.0,
            )
        ax.set_xlabel("iteration")
        ax.set_ylabel("energy above final")
        ax.set_title("solver energy descent")
        if labels is not None and len(labels) <= 12:
            ax.legend(fontsize=7)
        fig.tight_layout()
    return fig


def ratio_histogram_figure(ratios: list[float], bound: float | None = None, title: str = "regularity ratios"):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        if ratios:
            ax.hist(ratios, bins=min(20, max(5, len(ratios))), color="#4878b0", edgecolor="black")
        if bound is not None:
            ax.axvline(bound, color="#c44e52", linestyle="--", label=f"bound {bound:.4g}")
            ax.legend(fontsize=8)
        ax.set_xlabel("ratio")
        ax.set_ylabel("count")
        ax.set_title(title)
        fig.tight_layout()
    return fig
