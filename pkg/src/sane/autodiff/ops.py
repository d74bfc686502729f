"""Differentiable dense ops.

Broadcasting is limited to a scalar operand or a row vector against a matrix.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .tensor import BroadcastError, ShapeError, Tensor, as_tensor, make_result

LEAKY_SLOPE = 0.2


def _is_scalar(shape: tuple[int, ...]) -> bool:
    return shape == () or shape == (1,)


def _check_broadcast(a: tuple[int, ...], b: tuple[int, ...]) -> None:
    if a == b or _is_scalar(a) or _is_scalar(b):
        return
    for big, small in ((a, b), (b, a)):
        if len(big) == 2 and small in ((big[1],), (1, big[1])):
            return
    raise BroadcastError(f"cannot broadcast shapes {a} and {b} (only scalar and row broadcast)")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    if _is_scalar(shape):
        return np.asarray(g.sum()).reshape(shape)
    return g.sum(axis=0).reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return make_result(a.data + b.data, (a, b), lambda g: (_reduce_to(g, sa), _reduce_to(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return make_result(a.data - b.data, (a, b), lambda g: (_reduce_to(g, sa), _reduce_to(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    ad, bd = a.data, b.data

    def back(g):
        return (
            _reduce_to(g * bd, ad.shape) if a.requires_grad else None,
            _reduce_to(g * ad, bd.shape) if b.requires_grad else None,
        )

    return make_result(ad * bd, (a, b), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def back(g):
        return (g @ bd.T if a.requires_grad else None, ad.T @ g if b.requires_grad else None)

    return make_result(ad @ bd, (a, b), back)


def _unary(x: Tensor, y: np.ndarray, dydx: np.ndarray) -> Tensor:
    return make_result(y, (x,), lambda g: (g * dydx,))


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return _unary(x, np.where(pos, x.data, 0.0), pos.astype(np.float64))


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    pos = x.data > 0
    return _unary(x, np.where(pos, x.data, slope * x.data), np.where(pos, 1.0, slope))


def elu(x: Tensor) -> Tensor:
    ex = np.exp(np.minimum(x.data, 0.0))
    pos = x.data > 0
    return _unary(x, np.where(pos, x.data, ex - 1.0), np.where(pos, 1.0, ex))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _unary(x, y, 1.0 - y * y)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return expit(z)


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return _unary(x, y, y * (1.0 - y))


ACTIVATIONS = {"relu": relu, "elu": elu, "tanh": tanh, "sigmoid": sigmoid, "leaky_relu": leaky_relu}


def elementwise(kind: str, *args, slope: float = LEAKY_SLOPE) -> Tensor:
    """Dispatch by name: add, sub, mul or one of the activations."""
    if kind in ("add", "sub", "mul"):
        return {"add": add, "sub": sub, "mul": mul}[kind](*args)
    if kind == "leaky_relu":
        return leaky_relu(args[0], slope)
    if kind in ACTIVATIONS:
        return ACTIVATIONS[kind](args[0])
    raise ValueError(f"unknown elementwise op {kind!r}")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.ndim <= axis < max(x.ndim, 1):
        raise ShapeError(f"axis {axis} out of range for shape {x.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_result(y, (x,), back)


def total(x: Tensor) -> Tensor:
    shape = x.shape
    return make_result(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def concat(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not xs:
        raise ShapeError("concat of an empty list")
    sizes = [x.shape[axis] for x in xs]
    bounds = np.cumsum([0] + sizes)

    def back(g):
        return [np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(xs))]

    return make_result(np.concatenate([x.data for x in xs], axis=axis), xs, back)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    shape = x.shape

    def back(g):
        full = np.zeros(shape)
        full[:, start:stop] = g
        return (full,)

    return make_result(x.data[:, start:stop], (x,), back)


def index_select(x: Tensor, i: int) -> Tensor:
    """Pick one entry of a 1-D tensor as a scalar tensor."""
    if x.ndim != 1:
        raise ShapeError(f"index_select expects a vector, got {x.shape}")
    n = x.shape[0]

    def back(g):
        full = np.zeros(n)
        full[i] = g
        return (full,)

    return make_result(np.asarray(x.data[i]), (x,), back)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; ties route the gradient to ``a``."""
    if a.shape != b.shape:
        raise ShapeError(f"maximum shape mismatch: {a.shape} vs {b.shape}")
    take_a = a.data >= b.data
    return make_result(
        np.where(take_a, a.data, b.data), (a, b), lambda g: (np.where(take_a, g, 0.0), np.where(take_a, 0.0, g))
    )


class RowIndex:
    """Row indices with a cached sparse scatter matrix for the backward pass."""

    def __init__(self, idx, num_rows: int):
        self.idx = np.asarray(idx, dtype=np.int64)
        self.num_rows = num_rows
        if self.idx.size and (self.idx.min() < 0 or self.idx.max() >= num_rows):
            raise IndexError(f"row index out of range for {num_rows} rows")
        n = self.idx.size
        self.scatter = sp.csr_matrix((np.ones(n), (self.idx, np.arange(n))), shape=(num_rows, n))

    def scatter_add(self, g: np.ndarray) -> np.ndarray:
        return np.asarray(self.scatter @ g)


def take_rows(x: Tensor, index) -> Tensor:
    if not isinstance(index, RowIndex):
        index = RowIndex(index, x.shape[0])
    elif index.num_rows != x.shape[0]:
        raise ShapeError(f"index built for {index.num_rows} rows, tensor has {x.shape[0]}")
    return make_result(np.take(x.data, index.idx, axis=0), (x,), lambda g: (index.scatter_add(g),))


def head_sum(x: Tensor, heads: int) -> Tensor:
    """Sum each of ``heads`` contiguous column blocks: [R, H*d] -> [R, H]."""
    r, c = x.shape
    if c % heads:
        raise ShapeError(f"width {c} not divisible by {heads} heads")
    d = c // heads
    return make_result(
        x.data.reshape(r, heads, d).sum(axis=2),
        (x,),
        lambda g: (np.repeat(g, d, axis=1),),
    )


def head_columns(w: Tensor, heads: int) -> Tensor:
    """Vector [H*d] as the block matrix [H*d, H] with block h of ``w`` in column h.

    ``x @ head_columns(w, H)`` equals ``head_sum(x * w, H)``.
    """
    (c,) = w.shape
    if c % heads:
        raise ShapeError(f"width {c} not divisible by {heads} heads")
    owner = np.repeat(np.arange(heads), c // heads)
    rows = np.arange(c)
    out = np.zeros((c, heads))
    out[rows, owner] = w.data
    return make_result(out, (w,), lambda g: (g[rows, owner],))


def row_scale(x: Tensor, w: Tensor) -> Tensor:
    """Scale each head block of ``x`` [R, H*d] by the matching column of ``w`` [R, H] (or [R])."""
    wd = w.data if w.ndim == 2 else w.data[:, None]
    r, c = x.shape
    heads = wd.shape[1]
    if wd.shape[0] != r or c % heads:
        raise ShapeError(f"row_scale shape mismatch: {x.shape} vs {w.shape}")
    d = c // heads
    x3 = x.data.reshape(r, heads, d)
    wshape = w.shape

    def back(g):
        g3 = g.reshape(r, heads, d)
        gx = (g3 * wd[:, :, None]).reshape(r, c) if x.requires_grad else None
        gw = (g3 * x3).sum(axis=2).reshape(wshape) if w.requires_grad else None
        return gx, gw

    return make_result((x3 * wd[:, :, None]).reshape(r, c), (x, w), back)


def dropout(x: Tensor, p: float, seed: int, training: bool = True) -> Tensor:
    """Inverted dropout; the mask is fully determined by ``seed``."""
    if not training or p <= 0.0:
        return x
    if p >= 1.0:
        raise ValueError("dropout probability must be < 1")
    keep = (np.random.default_rng(seed).random(x.shape) >= p) / (1.0 - p)
    return make_result(x.data * keep, (x,), lambda g: (g * keep,))


def zeros_like(x: Tensor) -> Tensor:
    return Tensor(np.zeros(x.shape))
