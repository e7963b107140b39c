"""Static figures written next to the CLI's tabular output."""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Fixed metadata keeps repeated runs byte-identical.
_PNG_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_ratio_curves(path, distances: Sequence[float], curves: Dict[str, Sequence[float]],
                      title: str = "") -> Path:
    """Key fraction against distance, one line per curve, on a log scale."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, ratios in curves.items():
        r = np.asarray(ratios, dtype=float)
        ax.plot(distances, np.where(r > 0, r, np.nan), label=label)
    ax.set_yscale("log")
    ax.set_xlabel("distance (km)")
    ax.set_ylabel("l_sec / l_ver")
    ax.grid(True, which="both", alpha=0.3)
    if title:
        ax.set_title(title)
    if len(curves) > 1:
        ax.legend(fontsize=8)
    return _save(fig, Path(path))


def plot_fit_histograms(path, panels: Dict[str, dict]) -> Path:
    """Histogram of each sample set with its fitted normal density.

    Each panel is ``{"values": array, "mean": m, "sigma": s}``.
    """
    n = len(panels)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3), squeeze=False)
    for ax, (label, panel) in zip(axes[0], panels.items()):
        vals = np.asarray(panel["values"], dtype=float)
        ax.hist(vals, bins=50, density=True, alpha=0.6)
        m, s = panel["mean"], panel["sigma"]
        x = np.linspace(vals.min(), vals.max(), 300)
        ax.plot(x, np.exp(-0.5 * ((x - m) / s) ** 2) / (np.sqrt(2 * np.pi) * s))
        ax.set_title(label)
    return _save(fig, Path(path))
