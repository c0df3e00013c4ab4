"""Figures written next to the tab-separated reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_training_curves(history, path, title=None):
    """Train and dev objective per epoch, saved to ``path``."""
    epochs = [r.epoch for r in history]
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(epochs, [r.train for r in history], marker="o", ms=3, label="train")
    ax.plot(epochs, [r.dev for r in history], marker="s", ms=3, label="dev")
    best = min(history, key=lambda r: r.dev)
    ax.axvline(best.epoch, color="0.6", lw=0.8, ls="--")
    ax.set_xlabel("epoch")
    ax.set_ylabel("negative objective per utterance")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_prf(rows, path):
    """Grouped bars of token/type F-scores; ``rows`` is [(label, token_prf, type_prf)]."""
    labels = [r[0] for r in rows]
    xs = range(len(rows))
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(rows)), 3.2))
    ax.bar([x - 0.2 for x in xs], [r[1].f for r in rows], width=0.4, label="tokens")
    ax.bar([x + 0.2 for x in xs], [r[2].f for r in rows], width=0.4, label="types")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("F-score")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
