"""Minimal reverse-mode autodiff over numpy arrays."""

from .losses import EmptyMaskError, loss, sigmoid_bce, softmax_cross_entropy
from .ops import (
    LEAKY_SLOPE,
    RowIndex,
    concat,
    dropout,
    elementwise,
    elu,
    head_columns,
    head_sum,
    index_select,
    leaky_relu,
    matmul,
    maximum,
    relu,
    row_scale,
    sigmoid,
    slice_cols,
    softmax,
    take_rows,
    tanh,
    total,
    zeros_like,
)
from .optim import SGD, Adam, Optimizer, make_optimizer
from .segment import SegmentError, Segments, edge_dot, neighbor_sum, segment_reduce, segment_softmax
from .tensor import (
    BroadcastError,
    GradTape,
    ShapeError,
    TapeError,
    Tensor,
    active_tape,
    as_tensor,
    backward,
    no_grad,
)

ACTIVATIONS = {"relu": relu, "elu": elu, "tanh": tanh, "sigmoid": sigmoid}
