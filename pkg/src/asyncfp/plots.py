"""Headless figure rendering for metrics and bench CSV content.

Everything here draws to files through the Agg backend; the CLI report
path is the only intended caller, so no interactive backend is ever
touched.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .metrics import BenchRow, RunMetrics

__all__ = ["render_bench_figure", "render_metrics_figures"]


def _series(metrics: RunMetrics, name: str):
    epochs, values = [], []
    for row in metrics.rows:
        value = getattr(row, name)
        if value is not None:
            epochs.append(row.epoch)
            values.append(value)
    return epochs, values


def render_metrics_figures(metrics: RunMetrics, out_dir, stem: str) -> list[Path]:
    """Write convergence figures for one run; returns the file paths.

    Always emits the residual figure (with squared distance and the
    energy metric overlaid when the run logged them); adds an objective
    figure when the problem defines one.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, label in [
        ("fixed_point_residual", "fixed-point residual"),
        ("dist_sq_to_oracle", "squared distance to solution"),
        ("xi", "energy metric"),
    ]:
        epochs, values = _series(metrics, name)
        if epochs and any(v > 0 for v in values):
            ax.semilogy(epochs, values, label=label)
    ax.set_xlabel("epoch")
    ax.set_title(str(metrics.config.get("problem", "run")))
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    path = out_dir / f"{stem}_convergence.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    epochs, values = _series(metrics, "objective")
    if epochs:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.plot(epochs, values)
        ax.set_xlabel("epoch")
        ax.set_ylabel("objective")
        ax.set_title(str(metrics.config.get("problem", "run")))
        ax.grid(True, alpha=0.3)
        path = out_dir / f"{stem}_objective.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def render_bench_figure(rows: list[BenchRow], out_dir, stem: str) -> Path:
    """Speedup-versus-agents lines, one per mode."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for mode in sorted({r.mode for r in rows}):
        picked = sorted((r for r in rows if r.mode == mode), key=lambda r: r.agents)
        ax.plot([r.agents for r in picked], [r.speedup for r in picked],
                marker="o", label=mode)
    ax.set_xlabel("agents")
    ax.set_ylabel("speedup vs 1 async agent")
    ax.grid(True, alpha=0.3)
    ax.legend()
    path = out_dir / f"{stem}_speedup.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path
