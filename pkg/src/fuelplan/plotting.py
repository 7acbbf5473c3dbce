"""Report figures rendered to image files with the Agg backend."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Patch, Polygon  # noqa: E402

COLORS = {
    (False, False): "#d9d9d9",
    (True, False): "#d7301f",
    (False, True): "#41ab5d",
    (True, True): "#fd8d3c",
}
LABELS = {
    (False, False): "low risk",
    (True, False): "high risk",
    (False, True): "treated",
    (True, True): "treated, high risk",
}


def _series(report):
    ts = [0, *range(1, report.horizon + 1)]
    conn = [report.initial_connectivity, *(report.connectivity_series[t] for t in ts[1:])]
    weighted = [report.initial_weighted, *(report.weighted_series[t] for t in ts[1:])]
    return ts, conn, weighted


def plot_connectivity(report, path: str | Path) -> Path:
    ts, conn, _ = _series(report)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(ts, conn, marker="o")
    ax.set_xlabel("year")
    ax.set_ylabel("connected high-risk pairs")
    ax.set_xticks(ts)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def plot_objective(report, path: str | Path) -> Path:
    ts, _, weighted = _series(report)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(ts, weighted, color="#6baed6")
    ax.set_xlabel("year")
    ax.set_ylabel("weighted risk connectivity")
    ax.set_xticks(ts)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def plot_maps(report, landscape, path: str | Path) -> Path:
    """One panel per year; colour encodes (high risk, treated)."""
    years = sorted(report.risk_maps)
    cols = min(3, len(years))
    rows = math.ceil(len(years) / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 2.6 * rows), squeeze=False)
    for ax in axes.flat:
        ax.set_axis_off()
    for ax, t in zip(axes.flat, years):
        labels = report.risk_maps[t]
        for u, ring in landscape.geometry.items():
            lab = labels[u]
            ax.add_patch(Polygon(ring, closed=True, facecolor=COLORS[(lab["risk"], lab["treated"])],
                                 edgecolor="black", linewidth=0.4))
        ax.autoscale_view()
        ax.set_aspect("equal")
        ax.set_title(f"t = {t}", fontsize=9)
    handles = [Patch(facecolor=c, edgecolor="black", label=LABELS[k]) for k, c in COLORS.items()]
    fig.legend(handles=handles, loc="lower center", ncol=4, fontsize=8, frameon=False)
    fig.tight_layout(rect=(0, 0.06, 1, 1))
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def plot_report(report, landscape, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    paths = [plot_connectivity(report, out / "connectivity.png"), plot_objective(report, out / "objective.png")]
    if landscape.geometry is not None:
        paths.append(plot_maps(report, landscape, out / "maps.png"))
    return paths


def plot_levels(table: list[dict], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    levels = [row["level"] for row in table]
    ax.plot(levels, [row["mean_connectivity"] for row in table], marker="s")
    ax.set_xlabel("treatment level")
    ax.set_ylabel("mean connected high-risk pairs")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)
