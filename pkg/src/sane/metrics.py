from __future__ import annotations

import numpy as np


def accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise ValueError("evaluation split is empty")
    return float((logits[rows].argmax(axis=1) == labels[rows]).mean())


def micro_f1(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    """Pooled F1 over all labels, thresholding sigmoid outputs at 0.5 (logit 0).

    With no positives predicted or present the score is defined as 1.0.
    """
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise ValueError("evaluation split is empty")
    pred = logits[rows] > 0.0
    true = labels[rows].astype(bool)
    tp = np.sum(pred & true)
    denom = 2 * tp + np.sum(pred & ~true) + np.sum(~pred & true)
    return 1.0 if denom == 0 else float(2 * tp / denom)


def score(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray, multi_label: bool) -> float:
    return micro_f1(logits, labels, mask) if multi_label else accuracy(logits, labels, mask)


def loss_kind(multi_label: bool) -> str:
    return "sigmoid_bce" if multi_label else "softmax_cross_entropy"
