"""Alternating first-order optimization of architecture vectors and supernet weights."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .aggregators import LAYER_AGGS, NODE_AGGS, SKIPS
from .genotype import Genotype
from .graph import Graph
from .metrics import loss_kind, score
from .supernet import ArchParams, OpChoice, SuperNet


@dataclass
class SearchConfig:
    epochs: int = 200
    lr_w: float = 0.005
    lr_alpha: float = 3e-4
    weight_decay_w: float = 0.0002
    weight_decay_alpha: float = 1e-3
    epsilon: float = 0.0
    seed: int = 0
    K: int = 3
    hidden_dim: int = 32
    heads: int = 2
    dropout: float = 0.6
    leaky_scores: bool = True

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")
        if self.K < 1:
            raise ValueError(f"K must be at least 1, got {self.K}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float


@dataclass
class SearchResult:
    arch: ArchParams
    genotype: Genotype
    history: list[EpochRecord] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def final_val_acc(self) -> float:
        return self.history[-1].val_acc


def enumerate_space_size(K: int) -> int:
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    return len(NODE_AGGS) ** K * len(SKIPS) ** K * len(LAYER_AGGS)


def derive(arch: ArchParams, k: int = 1) -> Genotype:
    """Keep the strongest op on every edge; ties go to the lowest enum index."""
    if k != 1:
        raise NotImplementedError(f"top-k derivation is implemented for k=1 only, got k={k}")
    return Genotype(
        tuple(NODE_AGGS[int(np.argmax(a.data))] for a in arch.alpha_n),
        tuple(SKIPS[int(np.argmax(a.data))] for a in arch.alpha_s),
        LAYER_AGGS[int(np.argmax(arch.alpha_l.data))],
    )


def epsilon_explore_step(arch: ArchParams, epsilon: float, rng: np.random.Generator) -> OpChoice:
    """With probability ``epsilon`` per edge, pin that edge to one uniformly drawn op."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if epsilon == 0.0:
        return OpChoice.full(arch.K)

    def pick(n):
        explore = rng.random() < epsilon
        op = int(rng.integers(n))
        return op if explore else None

    node = [pick(len(NODE_AGGS)) for _ in range(arch.K)]
    skip = [pick(len(SKIPS)) for _ in range(arch.K)]
    return OpChoice(node, skip, pick(len(LAYER_AGGS)))


def _set_requires_grad(tensors, flag: bool) -> None:
    for t in tensors:
        t.requires_grad = flag


def search(net: SuperNet, arch: ArchParams, graph: Graph, config: SearchConfig) -> SearchResult:
    """Each epoch: one step on the architecture vectors against the validation loss,
    then one step on the weights against the training loss.

    The architecture gradient is taken at the current weights (no unrolled
    inner step). Validation forwards run without dropout.
    """
    if graph.train_mask is None or graph.val_mask is None:
        raise ValueError("search needs both train and val masks")
    if not graph.train_mask.any() or not graph.val_mask.any():
        raise ValueError("search needs non-empty train and val masks")
    start = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    weights = net.parameters()
    alphas = arch.tensors()
    w_opt = ad.Adam(weights, config.lr_w, config.weight_decay_w) if config.lr_w > 0 else None
    a_opt = (
        ad.Adam(alphas, config.lr_alpha, config.weight_decay_alpha, betas=(0.5, 0.999))
        if config.lr_alpha > 0
        else None
    )
    kind = loss_kind(graph.multi_label)
    history = []
    for epoch in range(config.epochs):
        choice = epsilon_explore_step(arch, config.epsilon, rng)

        _set_requires_grad(weights, False)
        try:
            logits = net.forward(graph, arch, training=False, choice=choice)
            val_loss = ad.loss(kind, logits, graph.labels, graph.val_mask)
            val_acc = score(logits.data, graph.labels, graph.val_mask, graph.multi_label)
            if a_opt is not None:
                ad.backward(val_loss)
                a_opt.step()
                a_opt.zero_grad()
            else:
                ad.active_tape().clear()
        finally:
            _set_requires_grad(weights, True)

        _set_requires_grad(alphas, False)
        try:
            logits = net.forward(graph, arch, training=True, choice=choice, rng=rng)
            train_loss = ad.loss(kind, logits, graph.labels, graph.train_mask)
            if w_opt is not None:
                ad.backward(train_loss)
                w_opt.step()
                w_opt.zero_grad()
            else:
                ad.active_tape().clear()
        finally:
            _set_requires_grad(alphas, True)

        history.append(EpochRecord(epoch, train_loss.item(), val_loss.item(), val_acc))
        if not all(np.all(np.isfinite(a.data)) for a in alphas):
            raise FloatingPointError(f"architecture vectors became non-finite at epoch {epoch}")
        if not math.isfinite(train_loss.item()):
            raise FloatingPointError(f"training loss became non-finite at epoch {epoch}")
    return SearchResult(arch, derive(arch), history, time.perf_counter() - start)


def run_search(graph: Graph, config: SearchConfig) -> tuple[SuperNet, SearchResult]:
    """Fresh supernet and architecture vectors from ``config.seed``, then search."""
    net = SuperNet(
        graph.feat_dim,
        graph.num_classes,
        K=config.K,
        hidden=config.hidden_dim,
        heads=config.heads,
        dropout=config.dropout,
        leaky_scores=config.leaky_scores,
        seed=config.seed,
    )
    arch = ArchParams.init(config.K, np.random.default_rng([config.seed, 1]))
    return net, search(net, arch, graph, config)


def write_history(history: list[EpochRecord], path) -> None:
    with open(Path(path), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_acc"])
        for r in history:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.val_acc)])


def read_history(path) -> list[EpochRecord]:
    with open(Path(path), newline="") as f:
        return [
            EpochRecord(int(r["epoch"]), float(r["train_loss"]), float(r["val_loss"]), float(r["val_acc"]))
            for r in csv.DictReader(f)
        ]
