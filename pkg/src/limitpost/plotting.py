"""Figure rendering for the experiment reports.

Figures are a human-facing companion to the delimited outputs; the CSV files
remain the machine contract and the only byte-reproducible artifacts.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .cost import CostCurve
from .optimizer import SaTrajectory

__all__ = [
    "render_cost_curve",
    "render_trajectory",
    "render_calibration",
    "render_covariances",
]


def render_cost_curve(curve: CostCurve, path: str | Path, argmin: float | None = None) -> Path:
    fig, axes = plt.subplots(1, 3, figsize=(12.0, 3.6))
    panels = [
        ("cost", curve.cost, curve.cost_se),
        ("first derivative", curve.gradient, curve.gradient_se),
        ("second derivative", curve.curvature, curve.curvature_se),
    ]
    for ax, (label, values, ses) in zip(axes, panels):
        ax.plot(curve.deltas, values, lw=1.2)
        ax.fill_between(curve.deltas, values - 3 * ses, values + 3 * ses, alpha=0.25)
        if argmin is not None:
            ax.axvline(argmin, color="dimgray", ls=":", lw=0.9)
        if label != "cost":
            ax.axhline(0.0, color="dimgray", lw=0.6)
        ax.set_xlabel("posting distance")
        ax.set_title(label)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=130)
    plt.close(fig)
    return out


def render_trajectory(
    trajectory: SaTrajectory, path: str | Path, target: float | None = None
) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(9.5, 3.6))
    steps = np.arange(trajectory.iterates.size)
    axes[0].plot(steps, trajectory.iterates, lw=0.9, label="iterates")
    axes[0].plot(steps, trajectory.averaged, lw=1.4, label="running mean")
    if target is not None:
        axes[0].axhline(target, color="dimgray", ls=":", lw=0.9, label="grid argmin")
    axes[0].set_xlabel("step")
    axes[0].set_ylabel("posting distance")
    axes[0].legend(frameon=False, fontsize=8)
    axes[1].plot(steps[1:], trajectory.gradient_samples, lw=0.7)
    axes[1].axhline(0.0, color="dimgray", lw=0.6)
    axes[1].set_xlabel("step")
    axes[1].set_ylabel("gradient sample")
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=130)
    plt.close(fig)
    return out


def render_calibration(points, model, path: str | Path) -> Path:
    pts = np.asarray(points, dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.semilogy(pts[:, 0], pts[:, 1], "b*", ms=6, label="observed")
    grid = np.linspace(pts[:, 0].min(), pts[:, 0].max(), 200)
    ax.semilogy(grid, model.intensity(grid), "r--", lw=1.2, label="exponential fit")
    ax.set_xlabel("distance to fair price")
    ax.set_ylabel("fill rate")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=130)
    plt.close(fig)
    return out


def render_covariances(rows, path: str | Path) -> Path:
    """rows: (label, covariance, standard_error) triples."""
    labels = [r[0] for r in rows]
    values = np.array([r[1] for r in rows])
    errors = np.array([r[2] for r in rows])
    fig, ax = plt.subplots(figsize=(max(5.0, 0.9 * len(rows)), 3.8))
    x = np.arange(len(rows))
    ax.bar(x, values, yerr=3 * errors, capsize=3, color="steelblue")
    ax.axhline(0.0, color="dimgray", lw=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("covariance (3 SE bars)")
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=130)
    plt.close(fig)
    return out
