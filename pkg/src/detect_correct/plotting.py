"""Matplotlib renderings of the exported figure data. Non-interactive (Agg)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CLEAN_COLOR = "#1f77b4"
NOISY_COLOR = "#d62728"

plt.rcParams.update({
    "font.size": 10,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.4,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "legend.frameon": False,
})


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_loss_histogram(fig_data, path, title=None):
    """Density-scaled loss histogram with both weighted components and ``t``.

    ``fig_data`` is the mapping returned by :func:`detect_correct.cli.figure_data`
    (or read back from ``figure_data.csv``).
    """
    left = np.asarray(fig_data["bin_left"])
    right = np.asarray(fig_data["bin_right"])
    centers = np.asarray(fig_data["bin_center"])
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    ax.bar(left, fig_data["density"], width=right - left, align="edge",
           color="0.8", edgecolor="0.55", linewidth=0.4, label="observed losses")
    ax.plot(centers, fig_data["clean_pdf"], color=CLEAN_COLOR, label="clean component")
    ax.plot(centers, fig_data["noisy_pdf"], color=NOISY_COLOR, label="noisy component")
    t = fig_data["threshold"]
    if t is not None and np.isfinite(t):
        ax.axvline(t, color="k", linestyle="--", linewidth=1.0, label=f"t = {t:.3f}")
    ax.set_xlabel("per-sample loss")
    ax.set_ylabel("density")
    if title:
        ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_loss_curves(report, path):
    """Mean training loss per epoch for both stages, stage two offset after stage one."""
    pre = report["loss_curves"]["pretrain"]
    train = report["loss_curves"]["train"]
    fig, ax = plt.subplots(figsize=(6.0, 3.4))
    ax.plot(np.arange(1, len(pre) + 1), pre, color="0.35", label="pre-training (cyclic lr)")
    ax.plot(np.arange(len(pre) + 1, len(pre) + len(train) + 1), train, color=CLEAN_COLOR,
            label="training")
    ax.axvline(len(pre) + 0.5, color="0.7", linewidth=0.8)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.legend()
    return _save(fig, path)


def plot_transition(t, path, title=None):
    t = np.asarray(t)
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    im = ax.imshow(t, vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_xlabel("observed label")
    ax.set_ylabel("true label")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    return _save(fig, path)
