"""Matplotlib rendering of learning curves into image files."""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

COLORS = {
    "maml": "#c0392b",
    "fomaml": "#e67e22",
    "mtl": "#8e44ad",
    "pretrain": "#2980b9",
    "random": "#7f8c8d",
}
LABELS = {"maml": "MAML", "fomaml": "foMAML", "mtl": "MTL", "pretrain": "Pretrain", "random": "Random"}


@contextmanager
def figure_style():
    rc = {
        "font.size": 10,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "legend.frameon": False,
        "savefig.dpi": 150,
        "savefig.bbox": "tight",
    }
    with plt.rc_context(rc):
        yield


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps reruns byte-stable
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_learning_curves(curves, path, title=None, ylabel="approximation ratio"):
    """``curves`` maps algorithm name to ``(mean, stderr)`` arrays over iterations."""
    with figure_style():
        fig, ax = plt.subplots(figsize=(5.5, 3.8))
        for algo, (mean, se) in curves.items():
            x = range(len(mean))
            color = COLORS.get(algo)
            ax.plot(x, mean, label=LABELS.get(algo, algo), color=color, lw=1.4)
            ax.fill_between(x, mean - se, mean + se, color=color, alpha=0.2, lw=0)
        ax.set_xlabel("VMC iteration")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(loc="lower right")
        return _save(fig, path)


def plot_outer_curves(curves, path, title=None):
    with figure_style():
        fig, ax = plt.subplots(figsize=(5.5, 3.8))
        for algo, energy in curves.items():
            ax.plot(range(len(energy)), energy, label=LABELS.get(algo, algo), color=COLORS.get(algo), lw=1.2)
        ax.set_xlabel("outer iteration")
        ax.set_ylabel("mean post-adaptation energy")
        if title:
            ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def plot_sigma_panels(panels, path, iters=None):
    """One subplot per task diversity; ``panels`` maps sigma to a ``curves`` dict."""
    sigmas = sorted(panels)
    with figure_style():
        fig, axes = plt.subplots(1, len(sigmas), figsize=(4.2 * len(sigmas), 3.6), sharey=True, squeeze=False)
        for ax, sigma in zip(axes[0], sigmas):
            for algo, (mean, se) in panels[sigma].items():
                m, s = (mean, se) if iters is None else (mean[:iters], se[:iters])
                x = range(len(m))
                ax.plot(x, m, label=LABELS.get(algo, algo), color=COLORS.get(algo), lw=1.3)
                ax.fill_between(x, m - s, m + s, color=COLORS.get(algo), alpha=0.2, lw=0)
            ax.set_title(f"sigma = {sigma}")
            ax.set_xlabel("VMC iteration")
        axes[0][0].set_ylabel("approximation ratio")
        axes[0][-1].legend(loc="lower right")
        return _save(fig, path)
