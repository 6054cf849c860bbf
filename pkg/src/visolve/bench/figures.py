"""PNG figures drawn from the seed-aggregated plot data."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

LABELS = {
    "sq_dist": r"$\|z - z^*\|^2$",
    "lyapunov": r"$\|z - z^*\|^2 + \|\omega - z^*\|^2$",
    "residual": "natural residual",
}


def render_metric(metric, curves, path, title=None):
    """Median with an interquartile band per schedule, log scale on y."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for label, rows in sorted(curves.items()):
        x, med, lo, hi = (np.array(c) for c in zip(*rows))
        keep = med > 0
        if not keep.any():
            continue
        line, = ax.plot(x[keep], med[keep], label=label)
        ax.fill_between(x[keep], np.maximum(lo[keep], 1e-300), hi[keep], color=line.get_color(), alpha=0.2)
    ax.set_yscale("log")
    ax.set_xlabel("component oracle calls")
    ax.set_ylabel(LABELS.get(metric, metric))
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(True, which="major", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def render_summary(summary, out_dir, title=None):
    """One PNG per metric; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [render_metric(m, curves, out_dir / f"{m}.png", title) for m, curves in sorted(summary.items())]


def render_image(image, path, title=None):
    fig, ax = plt.subplots(figsize=(3.5, 3.5))
    ax.imshow(np.clip(image, 0, 1), cmap="gray", vmin=0, vmax=1)
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
