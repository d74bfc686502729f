from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Tensor


class Optimizer:
    def __init__(self, params: Sequence[Tensor], lr: float, weight_decay: float = 0.0):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _grads(self, grads):
        if grads is None:
            grads = [p.grad for p in self.params]
        if len(grads) != len(self.params):
            raise ValueError(f"{len(grads)} gradients for {len(self.params)} parameters")
        out = []
        for p, g in zip(self.params, grads):
            g = np.zeros_like(p.data) if g is None else g
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            # L2 penalty enters as an additive gradient term
            out.append(g + self.weight_decay * p.data if self.weight_decay else g)
        return out

    def step(self, grads=None) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    def step(self, grads=None) -> None:
        for p, g in zip(self.params, self._grads(grads)):
            p.data -= self.lr * g


class Adam(Optimizer):
    def __init__(self, params, lr, weight_decay=0.0, betas=(0.9, 0.999), eps=1e-8):
        super().__init__(params, lr, weight_decay)
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads=None) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(self.params, self._grads(grads), self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(kind: str, params, lr: float, weight_decay: float = 0.0, **kwargs) -> Optimizer:
    if kind == "sgd":
        return SGD(params, lr, weight_decay)
    if kind == "adam":
        return Adam(params, lr, weight_decay, **kwargs)
    raise ValueError(f"unknown optimizer {kind!r}")
