"""Render sweep reports as figures.

Two views of the same points: the Pareto trade-off (accuracy against
validity-filtered average compression ratio, one marker per scale) and
the selection-dynamics view (selected-factor variance and accuracy
against scale). Files land next to the delimited report, named off its
stem. Rendering is headless; the Agg backend is forced before pyplot is
imported so this works in CI and over SSH.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from sdcc.harness import SweepPoint


def render_sweep_figures(points: Sequence[SweepPoint], report_path: str | Path) -> list[Path]:
    """Write <stem>_pareto.png and <stem>_variance.png beside the report."""
    if not points:
        raise ValueError("no sweep points to render")
    report_path = Path(report_path)
    base = report_path.with_suffix("")
    written: list[Path] = []

    defined = [p for p in points if p.avg_compression_ratio is not None]
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    if defined:
        ax.plot(
            [p.avg_compression_ratio for p in defined],
            [p.accuracy for p in defined],
            marker="o",
            color="#2a6f97",
        )
        for p in defined:
            ax.annotate(
                f"{p.scale:g}",
                (p.avg_compression_ratio, p.accuracy),
                textcoords="offset points",
                xytext=(4, 4),
                fontsize=7,
            )
        ax.set_xscale("log", base=2)
    ax.set_xlabel("average compression ratio (validity-filtered)")
    ax.set_ylabel("substring accuracy")
    ax.set_title("Accuracy vs. compression ratio")
    ax.grid(True, alpha=0.3)
    pareto = base.parent / f"{base.name}_pareto.png"
    fig.tight_layout()
    fig.savefig(pareto, dpi=150)
    plt.close(fig)
    written.append(pareto)

    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    scales = [p.scale for p in points]
    ax.plot(scales, [p.ratio_log2_variance for p in points], marker="s", color="#bc4749")
    ax.set_xlabel("scale bias")
    ax.set_ylabel("variance of selected log2 factor", color="#bc4749")
    ax.tick_params(axis="y", labelcolor="#bc4749")
    twin = ax.twinx()
    twin.plot(scales, [p.accuracy for p in points], marker="o", color="#2a6f97")
    twin.set_ylabel("substring accuracy", color="#2a6f97")
    twin.tick_params(axis="y", labelcolor="#2a6f97")
    ax.set_title("Selection variance and accuracy across scales")
    ax.grid(True, alpha=0.3)
    variance = base.parent / f"{base.name}_variance.png"
    fig.tight_layout()
    fig.savefig(variance, dpi=150)
    plt.close(fig)
    written.append(variance)

    return written
