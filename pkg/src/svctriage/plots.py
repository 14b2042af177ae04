"""Report figures rendered to files next to the text reports.

All figures embed the run fingerprint in the PNG metadata and carry no
timestamps, so identical runs produce identical bytes.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path, fingerprint: str) -> None:
    tmp = str(path) + ".tmp"
    fig.savefig(
        tmp,
        format="png",
        dpi=110,
        metadata={"Software": "svctriage", "Comment": f"fingerprint={fingerprint}"},
    )
    plt.close(fig)
    os.replace(tmp, path)


def save_training_curves(history, path, fingerprint: str = "") -> None:
    """Per-epoch training/validation loss and validation accuracy."""
    epochs = np.arange(1, len(history) + 1)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.plot(epochs, [h.train_loss for h in history], marker="o", label="train loss")
    val_losses = [h.val_loss for h in history]
    if np.isfinite(val_losses).any():
        ax1.plot(epochs, val_losses, marker="s", label="validation loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("cross-entropy")
    ax1.legend()
    ax1.grid(alpha=0.3)
    val_acc = [h.val_accuracy for h in history]
    if np.isfinite(val_acc).any():
        ax2.plot(epochs, val_acc, marker="o", color="tab:green")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("validation accuracy")
    ax2.set_ylim(0.0, 1.02)
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path, fingerprint)


def save_roc_curves(curves: dict, path, fingerprint: str = "") -> None:
    """One-vs-rest ROC per class on shared axes."""
    fig, ax = plt.subplots(figsize=(6, 5))
    for cls in curves:
        curve = curves[cls]
        xs = [p[0] for p in curve.points]
        ys = [p[1] for p in curve.points]
        ax.plot(xs, ys, label=f"{cls} (AUC {curve.auc:.2f})", linewidth=1.2)
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(fontsize=7, ncol=2)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path, fingerprint)


def save_chi2_bars(terms, scores, path, fingerprint: str = "", top: int = 10) -> None:
    """Horizontal bars for the highest-scoring features."""
    order = np.argsort(scores)[::-1][:top]
    names = [terms[i] for i in order][::-1]
    vals = [scores[i] for i in order][::-1]
    fig, ax = plt.subplots(figsize=(6, 0.4 * len(names) + 1.2))
    ax.barh(np.arange(len(names)), vals, color="tab:blue")
    ax.set_yticks(np.arange(len(names)))
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xlabel("chi-squared score")
    fig.tight_layout()
    _save(fig, path, fingerprint)


def save_correlation_heatmap(matrix, terms, path, fingerprint: str = "", top: int = 10) -> None:
    """Heatmap of feature correlations for the first `top` features given."""
    k = min(top, len(terms))
    sub = np.asarray(matrix)[:k, :k]
    fig, ax = plt.subplots(figsize=(6.5, 5.5))
    im = ax.imshow(sub, vmin=-1.0, vmax=1.0, cmap="RdBu_r")
    ax.set_xticks(np.arange(k))
    ax.set_yticks(np.arange(k))
    ax.set_xticklabels(terms[:k], rotation=60, ha="right", fontsize=7)
    ax.set_yticklabels(terms[:k], fontsize=7)
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    _save(fig, path, fingerprint)
