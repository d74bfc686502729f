"""Dense float64 tensors with a per-thread reverse-mode gradient tape."""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class BroadcastError(ShapeError):
    pass


class TapeError(RuntimeError):
    pass


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class GradTape:
    """Records non-leaf tensors in creation order.

    Creation order is already a topological order, so backward replays the
    list in reverse and visits every node once.
    """

    def __init__(self) -> None:
        self.nodes: list[Tensor] = []
        self.generation = 0
        self.enabled = True

    def record(self, t: "Tensor") -> None:
        t._tape = (self.generation, len(self.nodes))
        self.nodes.append(t)

    def clear(self) -> None:
        for node in self.nodes:
            node._parents = ()
            node._backward = None
        self.nodes = []
        self.generation += 1

    def __len__(self) -> int:
        return len(self.nodes)


_local = threading.local()


def active_tape() -> GradTape:
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = _local.tape = GradTape()
    return tape


@contextmanager
def no_grad():
    tape = active_tape()
    prev, tape.enabled = tape.enabled, False
    try:
        yield
    finally:
        tape.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_tape")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self._tape: tuple[int, int] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._tape is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; the functional forms live in ops.py
    def __add__(self, other):
        from .ops import add
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from .ops import sub
        return sub(self, other)

    def __rsub__(self, other):
        from .ops import sub
        return sub(other, self)

    def __mul__(self, other):
        from .ops import mul
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from .ops import mul
        return mul(self, -1.0)

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)

    def __getitem__(self, index):
        from .ops import index_select
        return index_select(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data: np.ndarray, parents: Iterable[Tensor], backward: BackwardFn) -> Tensor:
    """Wrap an op's output and record it if any parent needs a gradient."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._tape = None
    parents = tuple(parents)
    tape = active_tape()
    if tape.enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        tape.record(out)
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def backward(loss: Tensor, inputs: Sequence[Tensor] | None = None):
    """Backpropagate a scalar loss through the active tape.

    Gradients accumulate into ``.grad`` of every requires_grad leaf that the
    loss depends on. The tape is consumed. With ``inputs`` given, returns their
    gradients in order, zeros for tensors the loss does not depend on.
    """
    if loss.data.size != 1 or loss.ndim > 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = active_tape()
    if not loss.requires_grad:
        tape.clear()
        return None if inputs is None else [np.zeros_like(t.data) for t in inputs]
    if loss._tape is None or loss._tape[0] != tape.generation:
        raise TapeError("loss is not on the active tape")

    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes[: loss._tape[1] + 1]):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent._tape is None:
                parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
            else:
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg
    tape.clear()
    if inputs is None:
        return None
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in inputs]
