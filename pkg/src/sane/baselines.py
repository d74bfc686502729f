"""Discrete-space baselines: random architecture search and MLP-aggregator search.

Every sampled candidate is trained from scratch with fixed hyperparameters;
per-candidate tuning is not performed.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aggregators import LAYER_AGGS, MLP_DEPTHS, MLP_WIDTHS, NODE_AGGS, SKIPS, NodeAgg, Skip
from .genotype import Genotype
from .graph import Graph
from .runner import parallel_map
from .trainer import HyperParams, MlpSpec, build_model, evaluate, train

MLP_GRID = tuple(MlpSpec(w, d) for w in MLP_WIDTHS for d in MLP_DEPTHS)


@dataclass
class TrialRecord:
    index: int
    genotype: Genotype | None
    mlp: MlpSpec | None
    val_metric: float
    test_metric: float
    seconds: float
    seed: int

    def describe(self) -> dict:
        if self.mlp is not None:
            return {"mlp_width": self.mlp.width, "mlp_depth": self.mlp.depth}
        return self.genotype.to_dict()


def sample_genotype(rng: np.random.Generator, K: int) -> Genotype:
    """Uniform draw from the K-layer space."""
    return Genotype(
        tuple(NODE_AGGS[int(i)] for i in rng.integers(len(NODE_AGGS), size=K)),
        tuple(SKIPS[int(i)] for i in rng.integers(len(SKIPS), size=K)),
        LAYER_AGGS[int(rng.integers(len(LAYER_AGGS)))],
    )


def _run_trial(job) -> TrialRecord:
    index, genotype, mlp, graph, hp, seed = job
    start = time.perf_counter()
    model = build_model(genotype, hp, (graph.feat_dim, graph.num_classes), seed=seed, mlp=mlp)
    res = train(model, graph, hp, seed)
    test = evaluate(res.model, graph, "test")
    return TrialRecord(index, genotype, mlp, res.best_val, test, time.perf_counter() - start, seed)


def _best(records: list[TrialRecord]) -> TrialRecord:
    # first trial wins ties so the choice is stable
    return max(records, key=lambda r: (r.val_metric, -r.index))


def random_search(
    graph: Graph,
    budget: int = 200,
    hp: HyperParams = HyperParams(epochs=200, patience=30),
    seed: int = 0,
    K: int = 3,
    workers: int = 1,
) -> tuple[TrialRecord, list[TrialRecord]]:
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng(seed)
    genotypes = [sample_genotype(rng, K) for _ in range(budget)]
    jobs = [(i, g, None, graph, hp, seed + i) for i, g in enumerate(genotypes)]
    records = parallel_map(_run_trial, jobs, workers)
    return _best(records), records


def mlp_search(
    graph: Graph,
    budget: int = 12,
    hp: HyperParams = HyperParams(epochs=200, patience=30),
    seed: int = 0,
    K: int = 3,
    workers: int = 1,
) -> tuple[TrialRecord, list[TrialRecord]]:
    """Random search over the (width, depth) grid of MLP node aggregators.

    Cells are drawn without replacement until the grid is exhausted, so a budget
    of 12 or more covers every cell. The backbone uses identity skips and
    concatenation for every candidate.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng(seed)
    cells: list[MlpSpec] = []
    while len(cells) < budget:
        cells += [MLP_GRID[i] for i in rng.permutation(len(MLP_GRID))]
    cells = cells[:budget]
    backbone = Genotype((NodeAgg.SAGE_SUM,) * K, (Skip.IDENTITY,) * K, LAYER_AGGS[0])
    jobs = [(i, backbone, c, graph, hp, seed + i) for i, c in enumerate(cells)]
    records = parallel_map(_run_trial, jobs, workers)
    return _best(records), records


def write_trials(records: list[TrialRecord], path) -> None:
    with open(Path(path), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["trial_index", "genotype_json", "val_metric", "test_metric", "seconds"])
        for r in sorted(records, key=lambda r: r.index):
            w.writerow(
                [r.index, json.dumps(r.describe(), sort_keys=True), repr(r.val_metric), repr(r.test_metric), f"{r.seconds:.4f}"]
            )
