"""Static figures: point cloud scatter renders and loss curves (PNG)."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def render_clouds(clouds, path, titles=None, cols: int = 4, point_size: float = 2.0) -> Path:
    clouds = [np.asarray(c) for c in clouds]
    if not clouds:
        raise ValueError("nothing to render")
    cols = min(cols, len(clouds))
    rows = math.ceil(len(clouds) / cols)
    fig = plt.figure(figsize=(3 * cols, 3 * rows))
    for i, c in enumerate(clouds):
        ax = fig.add_subplot(rows, cols, i + 1, projection="3d")
        ax.scatter(c[:, 0], c[:, 2], c[:, 1], s=point_size, c=c[:, 1], cmap="viridis")
        ax.set_xlim(-1, 1), ax.set_ylim(-1, 1), ax.set_zlim(-1, 1)
        ax.set_axis_off()
        if titles:
            ax.set_title(str(titles[i]), fontsize=8)
    path = Path(path)
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def render_losses(logs: dict, path) -> Path:
    """``logs`` maps a stage name to its list of per-epoch records."""
    if not logs:
        raise ValueError("no logs to plot")
    fig, axes = plt.subplots(1, len(logs), figsize=(4 * len(logs), 3), squeeze=False)
    for ax, (name, records) in zip(axes[0], logs.items()):
        epochs = [r["epoch"] for r in records]
        for key in ("loss", "d_loss", "g_loss"):
            if records and key in records[0]:
                ax.plot(epochs, [r[key] for r in records], label=key)
        ax.set_title(name)
        ax.set_xlabel("epoch")
        ax.legend(fontsize=7)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path
