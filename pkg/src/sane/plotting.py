"""PNG figures for search histories and baseline sweeps."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_history(history, path) -> Path:
    """Training/validation loss and validation accuracy over search epochs."""
    epochs = [r.epoch for r in history]
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.5))
    left.plot(epochs, [r.train_loss for r in history], label="train loss")
    left.plot(epochs, [r.val_loss for r in history], label="val loss")
    left.set_xlabel("epoch")
    left.legend()
    right.plot(epochs, [r.val_acc for r in history], color="tab:green")
    right.set_xlabel("epoch")
    right.set_ylabel("val metric")
    return _save(fig, path)


def plot_sweep(xs: Sequence[float], means: Sequence[float], stds: Sequence[float], xlabel: str, path) -> Path:
    """Mean test metric with one-std error bars against a swept setting."""
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.errorbar(xs, means, yerr=stds, marker="o", capsize=3)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("test metric")
    ax.set_xticks(list(xs))
    return _save(fig, path)


def plot_trials(records, path) -> Path:
    """Validation against test metric per trial, best-so-far validation on the side."""
    records = sorted(records, key=lambda r: r.index)
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.5))
    left.scatter([r.val_metric for r in records], [r.test_metric for r in records], s=12)
    left.set_xlabel("val metric")
    left.set_ylabel("test metric")
    best, running = float("-inf"), []
    for r in records:
        best = max(best, r.val_metric)
        running.append(best)
    right.plot([r.index for r in records], running)
    right.set_xlabel("trial")
    right.set_ylabel("best val so far")
    return _save(fig, path)
