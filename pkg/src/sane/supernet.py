"""The relaxed search space: every edge of the K-layer backbone carries a
softmax-weighted mixture of all its candidate operations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .aggregators import (
    LAYER_AGGS,
    NODE_AGGS,
    SKIPS,
    Params,
    glorot,
    init_layer_params,
    init_node_params,
    layer_agg_width,
    layer_aggregate,
    node_aggregate,
    skip_apply,
    zeros,
)
from .autodiff import Tensor
from .genotype import Genotype
from .graph import Graph


@dataclass
class ArchParams:
    """Architecture vectors: one node-op and one skip vector per layer, one layer-op vector."""

    alpha_n: list[Tensor]
    alpha_s: list[Tensor]
    alpha_l: Tensor

    def __post_init__(self):
        if len(self.alpha_n) != len(self.alpha_s):
            raise ValueError("alpha_n and alpha_s need one vector per layer")
        for a in self.alpha_n:
            if a.shape != (len(NODE_AGGS),):
                raise ValueError(f"alpha_n vectors must have length {len(NODE_AGGS)}, got {a.shape}")
        for a in self.alpha_s:
            if a.shape != (len(SKIPS),):
                raise ValueError(f"alpha_s vectors must have length {len(SKIPS)}, got {a.shape}")
        if self.alpha_l.shape != (len(LAYER_AGGS),):
            raise ValueError(f"alpha_l must have length {len(LAYER_AGGS)}, got {self.alpha_l.shape}")

    @property
    def K(self) -> int:
        return len(self.alpha_n)

    @classmethod
    def init(cls, K: int, rng: np.random.Generator, scale: float = 1e-3) -> "ArchParams":
        def vec(n):
            return Tensor(scale * rng.normal(size=n), requires_grad=True)

        return cls(
            [vec(len(NODE_AGGS)) for _ in range(K)],
            [vec(len(SKIPS)) for _ in range(K)],
            vec(len(LAYER_AGGS)),
        )

    @classmethod
    def from_arrays(cls, alpha_n, alpha_s, alpha_l) -> "ArchParams":
        return cls(
            [Tensor(a, requires_grad=True) for a in alpha_n],
            [Tensor(a, requires_grad=True) for a in alpha_s],
            Tensor(alpha_l, requires_grad=True),
        )

    @classmethod
    def saturated(cls, genotype: Genotype, magnitude: float = 40.0) -> "ArchParams":
        """Vectors whose softmax is one-hot (to ~e^-magnitude) on the genotype's ops."""
        node, skip, layer = genotype.indices()

        def onehot(n, i):
            v = np.zeros(n)
            v[i] = magnitude
            return v

        return cls.from_arrays(
            [onehot(len(NODE_AGGS), i) for i in node],
            [onehot(len(SKIPS), i) for i in skip],
            onehot(len(LAYER_AGGS), layer),
        )

    def tensors(self) -> list[Tensor]:
        return [*self.alpha_n, *self.alpha_s, self.alpha_l]

    def named(self) -> dict[str, Tensor]:
        out = {f"alpha_n.{l}": a for l, a in enumerate(self.alpha_n)}
        out.update({f"alpha_s.{l}": a for l, a in enumerate(self.alpha_s)})
        out["alpha_l"] = self.alpha_l
        return out

    def copy(self) -> "ArchParams":
        return ArchParams.from_arrays(
            [a.data.copy() for a in self.alpha_n], [a.data.copy() for a in self.alpha_s], self.alpha_l.data.copy()
        )


def _np_softmax(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - v.max())
    return e / e.sum()


def softmax_weights(arch: ArchParams) -> dict[str, list[np.ndarray] | np.ndarray]:
    """Mixing weights of every edge, as plain arrays; ``arch`` is not touched."""
    return {
        "node": [_np_softmax(a.data) for a in arch.alpha_n],
        "skip": [_np_softmax(a.data) for a in arch.alpha_s],
        "layer": _np_softmax(arch.alpha_l.data),
    }


def mixed_op(alpha: Tensor, outputs: Sequence[Tensor]) -> Tensor:
    """Sum of ``outputs`` weighted by softmax(alpha)."""
    if alpha.shape != (len(outputs),):
        raise ad.ShapeError(f"{alpha.shape[0] if alpha.ndim else 0} weights for {len(outputs)} operations")
    shapes = {o.shape for o in outputs}
    if len(shapes) != 1:
        raise ad.ShapeError(f"mixed operation outputs disagree in shape: {sorted(shapes)}")
    w = ad.softmax(alpha, axis=0)
    out = None
    for i, o in enumerate(outputs):
        term = o * ad.index_select(w, i)
        out = term if out is None else out + term
    return out


@dataclass
class OpChoice:
    """Per-edge override: ``None`` keeps the full mixture, an index forces that single op."""

    node: list[int | None]
    skip: list[int | None]
    layer: int | None = None

    @classmethod
    def full(cls, K: int) -> "OpChoice":
        return cls([None] * K, [None] * K, None)

    def edges(self) -> list[int | None]:
        return [*self.node, *self.skip, self.layer]


@dataclass
class SuperNet:
    """All candidate operations with their own weights, plus the shared per-layer
    transform W_n^l, per-branch projections for the layer-aggregator mixture and
    a linear classifier."""

    in_dim: int
    num_classes: int
    K: int = 3
    hidden: int = 32
    heads: int = 2
    dropout: float = 0.6
    leaky_scores: bool = True
    seed: int = 0
    params: dict[str, Tensor] = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        d = self.hidden
        p: dict[str, Tensor] = {"input.W": glorot(rng, self.in_dim, d), "input.b": zeros(d)}
        for l in range(self.K):
            for kind in NODE_AGGS:
                for name, t in init_node_params(kind, d, self.heads, rng).items():
                    p[f"layer{l}.{kind.value}.{name}"] = t
            p[f"layer{l}.W"] = glorot(rng, d, d)
        for kind in LAYER_AGGS:
            for name, t in init_layer_params(kind, d, rng).items():
                p[f"layer_agg.{kind.value}.{name}"] = t
            width = layer_agg_width(kind, d, self.K)
            p[f"layer_agg.{kind.value}.proj.W"] = glorot(rng, width, d)
            p[f"layer_agg.{kind.value}.proj.b"] = zeros(d)
        p["classifier.W"] = glorot(rng, d, self.num_classes)
        p["classifier.b"] = zeros(self.num_classes)
        self.params = p

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise ValueError(f"checkpoint lacks {sorted(missing)[:3]}")
        for k, v in self.params.items():
            if state[k].shape != v.shape:
                raise ValueError(f"{k}: checkpoint shape {state[k].shape} != model shape {v.shape}")
            v.data = np.array(state[k], dtype=np.float64)

    def group(self, prefix: str) -> Params:
        n = len(prefix)
        return {k[n:]: v for k, v in self.params.items() if k.startswith(prefix)}

    def node_params(self, layer: int, kind) -> Params:
        return self.group(f"layer{layer}.{kind.value}.")

    def layer_params(self, kind) -> Params:
        return {k: v for k, v in self.group(f"layer_agg.{kind.value}.").items() if not k.startswith("proj.")}

    def forward(
        self,
        graph: Graph,
        arch: ArchParams,
        training: bool = False,
        choice: OpChoice | None = None,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        if graph.feat_dim != self.in_dim:
            raise ad.ShapeError(f"graph feature width {graph.feat_dim} != supernet input width {self.in_dim}")
        if arch.K != self.K:
            raise ad.ShapeError(f"architecture has {arch.K} layers, supernet has {self.K}")
        choice = choice or OpChoice.full(self.K)
        if training and rng is None:
            rng = np.random.default_rng(self.seed)
        p = self.params

        def drop(x):
            if not training:
                return x
            return ad.dropout(x, self.dropout, int(rng.integers(2**31)), training=True)

        h = drop(Tensor(graph.features)) @ p["input.W"] + p["input.b"]
        stacked = []
        for l in range(self.K):

            def agg(kind):
                return node_aggregate(kind, self.node_params(l, kind), h, graph, self.heads, self.leaky_scores)

            if choice.node[l] is None:
                mixed = mixed_op(arch.alpha_n[l], [agg(kind) for kind in NODE_AGGS])
            else:
                mixed = agg(NODE_AGGS[choice.node[l]])
            h = drop(ad.elu(mixed @ p[f"layer{l}.W"]))
            if choice.skip[l] is None:
                stacked.append(mixed_op(arch.alpha_s[l], [skip_apply(s, h) for s in SKIPS]))
            else:
                stacked.append(skip_apply(SKIPS[choice.skip[l]], h))

        def branch(kind):
            z = layer_aggregate(kind, self.layer_params(kind), stacked)
            return z @ p[f"layer_agg.{kind.value}.proj.W"] + p[f"layer_agg.{kind.value}.proj.b"]

        if choice.layer is None:
            z = mixed_op(arch.alpha_l, [branch(kind) for kind in LAYER_AGGS])
        else:
            z = branch(LAYER_AGGS[choice.layer])
        return z @ p["classifier.W"] + p["classifier.b"]

