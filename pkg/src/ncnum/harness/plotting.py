"""Static figures of a trace file (utility, residuals and averaged rates)."""

from __future__ import annotations

import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ncnum.harness.traceio import TraceTable  # noqa: E402

__all__ = ["plot_trace"]


def plot_trace(table: TraceTable, path: str | os.PathLike, reference: float | None = None) -> Path:
    """Write a three-panel PNG: utility, log-log residuals and ``rbar`` per source."""
    k = table.k
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    ax = axes[0]
    ax.plot(k, table.column("utility"), "k-", lw=1.2, label="averaged iterate")
    if reference is not None:
        ax.axhline(reference, color="0.5", ls="--", lw=1.0, label="reference")
    ax.set_xlabel("K")
    ax.set_ylabel("utility")
    ax.legend(frameon=False, fontsize=8)

    ax = axes[1]
    for name, style in (("conservation_residual", "-"), ("capacity_distance", "--"), ("utility_gap", ":")):
        if name in table.header:
            y = table.column(name)
            pos = y > 0
            if pos.any():
                ax.loglog(k[pos], y[pos], style, lw=1.2, label=name.replace("_", " "))
    ax.set_xlabel("K")
    ax.set_ylabel("residual")
    ax.legend(frameon=False, fontsize=8)

    ax = axes[2]
    for h in table.header:
        if h.startswith("rbar_"):
            ax.plot(k, table.column(h), lw=1.0, label=h[5:])
    ax.set_xlabel("K")
    ax.set_ylabel("averaged rate")
    ax.legend(frameon=False, fontsize=7, ncol=2)

    for ax in axes:
        ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
