"""Static PNG figures of loss paths (file output only)."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .core import BoundaryPath  # noqa: E402


def plot_paths(paths: Mapping[str, BoundaryPath], file: str | Path, title: str = "", max_lines: int = 12) -> Path:
    """Step plot of Lambda_t on [0, T] for each labelled path."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    items = list(paths.items())
    if len(items) > max_lines:
        stride = -(-len(items) // max_lines)
        items = items[::stride] + [items[-1]] if items[-1] not in items[::stride] else items[::stride]
    for label, p in items:
        ax.step(p.grid_times, p.grid_values, where="post", lw=1.0, label=str(label))
    ax.set_xlabel("t")
    ax.set_ylabel("loss")
    if title:
        ax.set_title(title)
    if 1 < len(items) <= max_lines + 1:
        ax.legend(fontsize=7)
    fig.tight_layout()
    out = Path(file)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
