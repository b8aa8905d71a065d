"""Report figures written next to the delimited outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update(
    {
        "figure.dpi": 110,
        "font.size": 9,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "axes.grid": True,
        "grid.alpha": 0.3,
    }
)


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def loss_curve(history: Sequence[float], path, title: str = "", monitors: dict | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3))
    ax.semilogy(np.arange(1, len(history) + 1), history, label="training loss")
    for name, values in (monitors or {}).items():
        ax.semilogy(np.arange(1, len(values) + 1), values, label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean L1 loss")
    if title:
        ax.set_title(title)
    if monitors:
        ax.legend(frameon=False)
    return _save(fig, path)


def error_histograms(surface_errors: Sequence[float], losses: Sequence[float], path, threshold: float = 0.003) -> Path:
    """Side-by-side distributions of training loss and surface error across a corpus."""
    fig, (a, b) = plt.subplots(1, 2, figsize=(7, 2.8))
    a.hist(losses, bins=max(5, len(losses) // 2), color="#4c72b0")
    a.set_xlabel("training loss")
    a.set_ylabel("meshes")
    b.hist(surface_errors, bins=max(5, len(surface_errors) // 2), color="#dd8452")
    b.axvline(threshold, color="k", lw=0.8, ls="--")
    b.set_xlabel("surface error")
    return _save(fig, path)


def comparison_bars(labels: Sequence[str], neural: Sequence[float], grid: Sequence[float], path) -> Path:
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(max(3.5, 1.2 * len(labels) + 1.5), 3))
    ax.bar(x - 0.2, neural, 0.4, label="network")
    ax.bar(x + 0.2, grid, 0.4, label="trilinear grid")
    ax.set_xticks(x, labels)
    ax.set_ylabel("surface error")
    ax.legend(frameon=False)
    return _save(fig, path)


def image_panel(image: np.ndarray, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(3, 3))
    ax.imshow(np.clip(image, 0, 1))
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    return _save(fig, path)
