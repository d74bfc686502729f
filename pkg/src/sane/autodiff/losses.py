from __future__ import annotations

import numpy as np

from .ops import _sigmoid
from .tensor import ShapeError, Tensor, make_result


class EmptyMaskError(ValueError):
    pass


def _rows(mask, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    rows = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if rows.size == 0:
        raise EmptyMaskError("loss mask selects no nodes")
    if mask.dtype == bool and mask.shape[0] != n:
        raise ShapeError(f"mask length {mask.shape[0]} for {n} rows")
    return rows


def softmax_cross_entropy(logits: Tensor, labels, mask) -> Tensor:
    """Mean cross-entropy over the masked rows; labels are class indices."""
    rows = _rows(mask, logits.shape[0])
    y = np.asarray(labels, dtype=np.int64)[rows]
    z = logits.data[rows]
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = rows.size
    loss = -logp[np.arange(n), y].mean()
    shape = logits.shape

    def back(g):
        p = np.exp(logp)
        p[np.arange(n), y] -= 1.0
        full = np.zeros(shape)
        full[rows] = p * (g / n)
        return (full,)

    return make_result(np.asarray(loss), (logits,), back)


def sigmoid_bce(logits: Tensor, labels, mask) -> Tensor:
    """Mean binary cross-entropy over every (masked row, label) pair."""
    rows = _rows(mask, logits.shape[0])
    y = np.asarray(labels, dtype=np.float64)[rows]
    z = logits.data[rows]
    loss = (np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))).mean()
    count = z.size
    shape = logits.shape

    def back(g):
        full = np.zeros(shape)
        full[rows] = (_sigmoid(z) - y) * (g / count)
        return (full,)

    return make_result(np.asarray(loss), (logits,), back)


def loss(kind: str, logits: Tensor, labels, mask) -> Tensor:
    if kind == "softmax_cross_entropy":
        return softmax_cross_entropy(logits, labels, mask)
    if kind == "sigmoid_bce":
        return sigmoid_bce(logits, labels, mask)
    raise ValueError(f"unknown loss {kind!r}")
