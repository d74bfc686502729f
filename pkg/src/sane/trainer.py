"""Discrete GNN models built from a genotype, trained from scratch and tuned on validation."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .aggregators import (
    Params,
    glorot,
    init_layer_params,
    init_mlp_params,
    init_node_params,
    layer_agg_width,
    layer_aggregate,
    mlp_node_aggregate,
    node_aggregate,
    skip_apply,
    zeros,
)
from .autodiff import Tensor
from .genotype import Genotype
from .graph import Graph
from .metrics import loss_kind, score
from .runner import parallel_map

log = logging.getLogger(__name__)

HEADS = (1, 2, 4, 8)
HIDDEN = (16, 32, 64, 128, 256, 512)
ACTIVATIONS = ("relu", "elu", "tanh")
LR_RANGE = (1e-4, 1e-2)
L2_RANGE = (1e-5, 1e-3)
# "feed": a ZERO skip hands an all-zero block to the layer aggregator (what the
# relaxed network computes at saturation); "exclude": the layer is left out
ZERO_SKIP_MODES = ("feed", "exclude")


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={value})")
        self.epoch = epoch


@dataclass(frozen=True)
class HyperParams:
    heads: int = 2
    hidden: int = 32
    lr: float = 0.005
    l2: float = 0.0002
    activation: str = "elu"
    dropout: float = 0.6
    epochs: int = 600
    patience: int = 30
    zero_skip: str = "feed"

    def __post_init__(self):
        if self.heads not in HEADS:
            raise ValueError(f"heads must be one of {HEADS}, got {self.heads}")
        if self.hidden < 1:
            raise ValueError(f"hidden must be positive, got {self.hidden}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        # lr == 0 is accepted and means "never step": the model stays at its initialization
        if self.lr < 0 or self.l2 < 0:
            raise ValueError("lr and l2 must be nonnegative")
        if self.epochs < 1 or self.patience < 1:
            raise ValueError("epochs and patience must be at least 1")
        if self.zero_skip not in ZERO_SKIP_MODES:
            raise ValueError(f"zero_skip must be one of {ZERO_SKIP_MODES}, got {self.zero_skip!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def sample_hyperparams(rng: np.random.Generator, base: HyperParams) -> HyperParams:
    """One draw from the tuning domains; epochs and patience come from ``base``."""
    lo, hi = np.log(LR_RANGE)
    lr = float(np.exp(rng.uniform(lo, hi)))
    if rng.random() < 0.2:
        l2 = 0.0
    else:
        lo, hi = np.log(L2_RANGE)
        l2 = float(np.exp(rng.uniform(lo, hi)))
    return HyperParams(
        heads=int(rng.choice(HEADS)),
        hidden=int(rng.choice(HIDDEN)),
        lr=lr,
        l2=l2,
        activation=str(rng.choice(ACTIVATIONS)),
        dropout=float(rng.uniform(0.0, 0.8)),
        epochs=base.epochs,
        patience=base.patience,
        zero_skip=base.zero_skip,
    )


@dataclass(frozen=True)
class MlpSpec:
    width: int
    depth: int


class GNNModel:
    """K fixed aggregator layers, fixed skips, one layer aggregator and a linear classifier.

    With ``hp.zero_skip == "feed"`` a ZERO skip hands an all-zero block to the
    layer aggregator, exactly as the relaxed network does when its skip weights
    saturate. With ``"exclude"`` those layers are dropped from the aggregator's
    input, and a genotype whose skips are all ZERO falls back to the last layer.
    """

    def __init__(
        self,
        genotype: Genotype,
        in_dim: int,
        num_classes: int,
        hp: HyperParams = HyperParams(),
        seed: int = 0,
        leaky_scores: bool = True,
        mlp: MlpSpec | None = None,
    ):
        self.genotype = genotype
        self.hp = hp
        self.leaky_scores = leaky_scores
        self.mlp = mlp
        identity = [l for l, s in enumerate(genotype.skip_ops) if s.value == "IDENTITY"]
        if hp.zero_skip == "feed":
            self.active_layers = list(range(genotype.K))
            if not identity:
                log.warning("genotype %s disconnects every layer; predictions depend only on the classifier bias", genotype)
        elif identity:
            self.active_layers = identity
        else:
            log.warning("genotype %s has no IDENTITY skip; using the last layer only", genotype)
            self.active_layers = [genotype.K - 1]
        rng = np.random.default_rng(seed)
        d = hp.hidden
        p: dict[str, Tensor] = {"input.W": glorot(rng, in_dim, d), "input.b": zeros(d)}
        for l, kind in enumerate(genotype.node_ops):
            if mlp is None:
                node = init_node_params(kind, d, hp.heads, rng)
                agg_width = d
            else:
                node = init_mlp_params(d, mlp.width, mlp.depth, rng)
                agg_width = mlp.width
            for name, t in node.items():
                p[f"layer{l}.node.{name}"] = t
            p[f"layer{l}.W"] = glorot(rng, agg_width, d)
        for name, t in init_layer_params(genotype.layer_op, d, rng).items():
            p[f"layer_agg.{name}"] = t
        width = layer_agg_width(genotype.layer_op, d, len(self.active_layers))
        p["classifier.W"] = glorot(rng, width, num_classes)
        p["classifier.b"] = zeros(num_classes)
        self.params = p
        self.in_dim = in_dim
        self.num_classes = num_classes

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def _group(self, prefix: str) -> Params:
        n = len(prefix)
        return {k[n:]: v for k, v in self.params.items() if k.startswith(prefix)}

    @property
    def agg_width(self) -> int:
        return self.params["classifier.W"].shape[0]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, v in self.params.items():
            if state[k].shape != v.shape:
                raise ValueError(f"{k}: checkpoint shape {state[k].shape} != model shape {v.shape}")
            v.data = np.array(state[k], dtype=np.float64)

    def embed(self, graph: Graph, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Layer-aggregator output, the representation the classifier sees."""
        if graph.feat_dim != self.in_dim:
            raise ad.ShapeError(f"graph feature width {graph.feat_dim} != model input width {self.in_dim}")
        if training and rng is None:
            rng = np.random.default_rng(0)
        act = ad.ACTIVATIONS[self.hp.activation]
        p = self.params

        def drop(x):
            if not training:
                return x
            return ad.dropout(x, self.hp.dropout, int(rng.integers(2**31)), training=True)

        h = drop(Tensor(graph.features)) @ p["input.W"] + p["input.b"]
        stacked = []
        for l, (kind, skip) in enumerate(zip(self.genotype.node_ops, self.genotype.skip_ops)):
            node = self._group(f"layer{l}.node.")
            if self.mlp is None:
                agg = node_aggregate(kind, node, h, graph, self.hp.heads, self.leaky_scores)
            else:
                agg = mlp_node_aggregate(self.mlp.width, self.mlp.depth, node, h, graph)
            h = drop(act(agg @ p[f"layer{l}.W"]))
            if self.hp.zero_skip == "feed":
                stacked.append(skip_apply(skip, h))
            elif l in self.active_layers:
                stacked.append(h)
        return layer_aggregate(self.genotype.layer_op, self._group("layer_agg."), stacked)

    def forward(self, graph: Graph, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        return self.embed(graph, training, rng) @ self.params["classifier.W"] + self.params["classifier.b"]


def build_model(
    genotype: Genotype,
    hp: HyperParams,
    graph_dims: tuple[int, int],
    seed: int = 0,
    leaky_scores: bool = True,
    mlp: MlpSpec | None = None,
) -> GNNModel:
    in_dim, num_classes = graph_dims
    return GNNModel(genotype, in_dim, num_classes, hp, seed, leaky_scores, mlp)


def discrete_from_supernet(net, genotype: Genotype) -> GNNModel:
    """The genotype's model carrying the supernet's weights.

    The supernet projects each layer-aggregator branch to the hidden width
    before its classifier; both maps are linear, so they fold into one.
    """
    hp = HyperParams(heads=net.heads, hidden=net.hidden, activation="elu", dropout=net.dropout)
    model = GNNModel(genotype, net.in_dim, net.num_classes, hp, leaky_scores=net.leaky_scores)
    src = net.params
    state = {"input.W": src["input.W"].data, "input.b": src["input.b"].data}
    for l, kind in enumerate(genotype.node_ops):
        for name, t in net.node_params(l, kind).items():
            state[f"layer{l}.node.{name}"] = t.data
        state[f"layer{l}.W"] = src[f"layer{l}.W"].data
    for name, t in net.layer_params(genotype.layer_op).items():
        state[f"layer_agg.{name}"] = t.data
    key = f"layer_agg.{genotype.layer_op.value}.proj"
    proj_w, proj_b = src[f"{key}.W"].data, src[f"{key}.b"].data
    state["classifier.W"] = proj_w @ src["classifier.W"].data
    state["classifier.b"] = proj_b @ src["classifier.W"].data + src["classifier.b"].data
    model.load_state_dict(state)
    return model


@dataclass
class TrainResult:
    model: GNNModel
    best_epoch: int
    best_val: float
    epochs_run: int
    seconds: float
    history: list[tuple[int, float, float]] = field(default_factory=list)


def evaluate(model: GNNModel, graph: Graph, split: str) -> float:
    mask = {"train": graph.train_mask, "val": graph.val_mask}.get(split)
    if split == "test":
        mask = graph.test_mask
    elif split not in ("train", "val"):
        raise ValueError(f"unknown split {split!r}")
    if mask is None or not np.any(mask):
        raise ValueError(f"split {split!r} is empty")
    with ad.no_grad():
        logits = model.forward(graph, training=False).data
    return score(logits, graph.labels, mask, graph.multi_label)


def train(model: GNNModel, graph: Graph, hp: HyperParams, seed: int = 0) -> TrainResult:
    """Full-batch Adam with early stopping on the validation metric.

    The returned model holds the weights of the best validation epoch.
    """
    if graph.train_mask is None or graph.val_mask is None:
        raise ValueError("training needs train and val masks")
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    params = model.parameters()
    opt = ad.Adam(params, hp.lr, hp.l2) if hp.lr > 0 else None
    kind = loss_kind(graph.multi_label)
    best_val, best_epoch, best_state = -math.inf, -1, None
    history = []
    epoch = 0
    for epoch in range(hp.epochs):
        train_loss = float("nan")
        if opt is not None:
            logits = model.forward(graph, training=True, rng=rng)
            loss = ad.loss(kind, logits, graph.labels, graph.train_mask)
            train_loss = loss.item()
            if not math.isfinite(train_loss):
                ad.active_tape().clear()
                raise DivergenceError(epoch, train_loss)
            ad.backward(loss)
            opt.step()
            opt.zero_grad()
        val = evaluate(model, graph, "val")
        history.append((epoch, train_loss, val))
        if val > best_val:
            best_val, best_epoch, best_state = val, epoch, model.state_dict()
        elif epoch - best_epoch >= hp.patience:
            break
    model.load_state_dict(best_state)
    return TrainResult(model, best_epoch, best_val, epoch + 1, time.perf_counter() - start, history)


@dataclass
class EvalReport:
    metric: str
    mean: float
    std: float
    values: list[float]
    seeds: list[int]
    val_values: list[float] = field(default_factory=list)
    single_repeat: bool = False

    @classmethod
    def from_values(cls, metric, values, seeds, val_values=()) -> "EvalReport":
        values = [float(v) for v in values]
        single = len(values) < 2
        std = 0.0 if single else float(np.std(values, ddof=1))
        return cls(metric, float(np.mean(values)), std, values, list(seeds), [float(v) for v in val_values], single)

    def to_dict(self) -> dict:
        return asdict(self)


def _fit_once(job):
    genotype, graph, hp, seed, leaky, mlp = job
    model = build_model(genotype, hp, (graph.feat_dim, graph.num_classes), seed, leaky, mlp)
    res = train(model, graph, hp, seed)
    return res


def repeat_eval(
    genotype: Genotype,
    graph: Graph,
    hp: HyperParams,
    repeats: int = 5,
    seed: int = 0,
    workers: int = 1,
    leaky_scores: bool = True,
    mlp: MlpSpec | None = None,
) -> EvalReport:
    """Retrain from scratch ``repeats`` times and report the test metric."""
    seeds = [seed + r for r in range(repeats)]
    jobs = [(genotype, graph, hp, s, leaky_scores, mlp) for s in seeds]
    results = parallel_map(_fit_once, jobs, workers)
    tests = [evaluate(r.model, graph, "test") for r in results]
    metric = "micro_f1" if graph.multi_label else "accuracy"
    return EvalReport.from_values(metric, tests, seeds, [r.best_val for r in results])


def _tune_trial(job):
    genotype, graph, hp, seed, leaky = job
    try:
        return _fit_once((genotype, graph, hp, seed, leaky, None)).best_val
    except DivergenceError as exc:
        log.warning("tuning trial %s discarded: %s", hp, exc)
        return -math.inf


def tune(
    genotype: Genotype,
    graph: Graph,
    trials: int = 50,
    seed: int = 0,
    repeats: int = 5,
    base: HyperParams = HyperParams(),
    workers: int = 1,
    leaky_scores: bool = True,
) -> tuple[HyperParams, EvalReport, list[tuple[HyperParams, float]]]:
    """Seeded random search over the hyperparameter domains, selected on validation,
    then ``repeats`` fresh retrains of the winner evaluated on test."""
    if trials < 1:
        raise ValueError("tuning needs at least one trial")
    rng = np.random.default_rng(seed)
    candidates = [sample_hyperparams(rng, base) for _ in range(trials)]
    jobs = [(genotype, graph, hp, seed + t, leaky_scores) for t, hp in enumerate(candidates)]
    vals = parallel_map(_tune_trial, jobs, workers)
    best = int(np.argmax(vals))
    report = repeat_eval(genotype, graph, candidates[best], repeats, seed + 10_000, workers, leaky_scores)
    return candidates[best], report, list(zip(candidates, vals))
