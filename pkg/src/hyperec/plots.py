"""Report figures rendered alongside the delimited evaluation output."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import EvalReport  # noqa: E402

_BAR_COLORS = ("#4878a8", "#e49444", "#6a9f58")


def metrics_figure(reports: Sequence[EvalReport]) -> plt.Figure:
    """Grouped bar chart of precision/recall/F1 per model."""
    if not reports:
        raise ValueError("no reports to plot")
    k = reports[0].k
    names = [r.model_name for r in reports]
    series = {
        f"precision@{k}": [r.precision for r in reports],
        f"recall@{k}": [r.recall for r in reports],
        f"f1@{k}": [r.f1 for r in reports],
    }

    width = 0.26
    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(names) + 2.0), 4.0))
    for offset, (label, values) in enumerate(series.items()):
        xs = [i + (offset - 1) * width for i in range(len(names))]
        ax.bar(xs, values, width=width, label=label,
               color=_BAR_COLORS[offset % len(_BAR_COLORS)])
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("metric value")
    ax.set_title(f"Top-{k} ranking quality by model")
    ax.grid(axis="y", alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def save_metrics_chart(reports: Sequence[EvalReport], path: str | Path) -> Path:
    """Render the metrics chart to a file and close the figure."""
    path = Path(path)
    fig = metrics_figure(reports)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
