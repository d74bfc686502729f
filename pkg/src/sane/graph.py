"""Graphs in CSR form over the self-loop-augmented edge set, plus bundle I/O."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .autodiff import RowIndex, Segments

BUNDLE_FILES = ("meta.json", "edges.tsv", "features.bin", "labels.tsv", "masks.tsv")
META_KEYS = ("num_nodes", "feat_dim", "num_classes", "multi_label")
SPLITS = ("train", "val", "test")


class BundleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable graph. Row ``v`` of the CSR lists Ñ(v), the neighbors of v including v.

    ``labels`` is an int vector (-1 = unlabeled) or, in multi-label mode, an
    N x C 0/1 matrix. Reads of ``test_mask`` are counted in ``test_reads`` so
    tests can audit that selection code never touches the test split.
    """

    num_nodes: int
    offsets: np.ndarray
    targets: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    multi_label: bool = False
    train_mask: np.ndarray | None = None
    val_mask: np.ndarray | None = None
    _test_mask: np.ndarray | None = None
    raw_edge_count: int = 0
    _audit: list = field(default_factory=lambda: [0], repr=False)

    @property
    def test_mask(self) -> np.ndarray | None:
        self._audit[0] += 1
        return self._test_mask

    @property
    def test_reads(self) -> int:
        return self._audit[0]

    @property
    def has_test(self) -> bool:
        return self._test_mask is not None

    @property
    def feat_dim(self) -> int:
        return self.features.shape[1]

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def edge_count(self) -> int:
        """Undirected edges without self-loops, after deduplication."""
        return int((self.targets.size - self.num_nodes) // 2)

    @cached_property
    def edge_dst(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_nodes), self.degrees)

    @property
    def edge_src(self) -> np.ndarray:
        return self.targets

    @cached_property
    def segments(self) -> Segments:
        return Segments(self.edge_dst, self.num_nodes)

    @cached_property
    def src_index(self) -> RowIndex:
        return RowIndex(self.targets, self.num_nodes)

    @cached_property
    def dst_index(self) -> RowIndex:
        return RowIndex(self.edge_dst, self.num_nodes)

    @cached_property
    def non_self(self) -> np.ndarray:
        return self.targets != self.edge_dst

    @cached_property
    def open_segments(self) -> Segments:
        """Segments over N(v), the neighborhood without v itself."""
        return Segments(self.edge_dst[self.non_self], self.num_nodes)

    @cached_property
    def open_src_index(self) -> RowIndex:
        return RowIndex(self.targets[self.non_self], self.num_nodes)

    @cached_property
    def mean_coef(self) -> np.ndarray:
        return 1.0 / self.degrees[self.edge_dst]

    @cached_property
    def gcn_coef(self) -> np.ndarray:
        return degree_invsqrt_pairs(self)

    def neighbors(self, v: int) -> np.ndarray:
        return self.targets[self.offsets[v] : self.offsets[v + 1]]

    def with_masks(self, train, val, test) -> "Graph":
        return dataclasses.replace(
            self, train_mask=train, val_mask=val, _test_mask=test, _audit=[0]
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.offsets, self.targets, self.features, self.labels):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


def from_edges(
    num_nodes: int,
    edges,
    features,
    labels,
    num_classes: int,
    multi_label: bool = False,
) -> Graph:
    """Symmetrize, deduplicate, add self-loops and build the CSR."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= num_nodes):
        raise BundleError(f"edge index out of range for {num_nodes} nodes")
    loops = np.arange(num_nodes)
    src = np.concatenate([e[:, 0], e[:, 1], loops])
    dst = np.concatenate([e[:, 1], e[:, 0], loops])
    keys = np.unique(dst * num_nodes + src)
    dst, src = keys // num_nodes, keys % num_nodes
    offsets = np.concatenate([[0], np.cumsum(np.bincount(dst, minlength=num_nodes))])
    return Graph(
        num_nodes=num_nodes,
        offsets=offsets.astype(np.int64),
        targets=src.astype(np.int64),
        features=np.asarray(features, dtype=np.float64),
        labels=np.asarray(labels),
        num_classes=num_classes,
        multi_label=multi_label,
        raw_edge_count=int(e.shape[0]),
    )


def degree_invsqrt_pairs(graph: Graph) -> np.ndarray:
    """(deg(v) deg(u))^{-1/2} for every CSR edge (v, u)."""
    d = graph.degrees.astype(np.float64)
    return 1.0 / np.sqrt(d[graph.edge_dst] * d[graph.edge_src])


def make_splits(graph: Graph, fractions=(0.6, 0.2, 0.2), seed: int = 0) -> Graph:
    """Seeded shuffle, then contiguous train/val/test blocks."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {tuple(fractions)}")
    n = graph.num_nodes
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    masks = []
    for lo, hi in ((0, n_train), (n_train, n_train + n_val), (n_train + n_val, n)):
        m = np.zeros(n, dtype=bool)
        m[perm[lo:hi]] = True
        masks.append(m)
    return graph.with_masks(*masks)


def synth_planted(
    num_nodes: int = 300,
    num_classes: int = 3,
    feat_dim: int = 16,
    p_in: float = 0.05,
    p_out: float = 0.005,
    seed: int = 0,
    noise: float = 0.5,
) -> Graph:
    """Planted-community graph: round-robin classes, denser edges inside a class,
    features = random unit class mean + Gaussian noise. No masks are set."""
    if not (0.0 < p_in < 1.0 and 0.0 <= p_out < 1.0):
        raise ValueError("edge probabilities must lie in (0, 1)")
    if p_in <= p_out:
        raise ValueError(f"p_in must exceed p_out, got p_in={p_in}, p_out={p_out}")
    rng = np.random.default_rng(seed)
    labels = np.arange(num_nodes) % num_classes
    iu, ju = np.triu_indices(num_nodes, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    means = rng.normal(size=(num_classes, feat_dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    features = means[labels] + noise * rng.normal(size=(num_nodes, feat_dim))
    return from_edges(num_nodes, edges, features, labels, num_classes)


def planted_split(seed: int = 0, split_seed: int | None = None, **kwargs) -> Graph:
    g = synth_planted(seed=seed, **kwargs)
    return make_splits(g, seed=seed if split_seed is None else split_seed)


# --- bundle I/O ---------------------------------------------------------------


def _read_tsv(path: Path) -> list[list[str]]:
    rows = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            rows.append(line.split("\t"))
    return rows


def _node_id(text: str, n: int, fname: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise BundleError(f"{fname}: bad node id {text!r}") from None
    if not 0 <= v < n:
        raise BundleError(f"{fname}: node index {v} out of range for num_nodes={n}")
    return v


def load_bundle(path) -> Graph:
    path = Path(path)
    for name in BUNDLE_FILES:
        if not (path / name).is_file():
            raise BundleError(f"{name}: missing from bundle {path}")
    meta = json.loads((path / "meta.json").read_text())
    missing = [k for k in META_KEYS if k not in meta]
    if missing:
        raise BundleError(f"meta.json: missing keys {missing}")
    n, d, c = int(meta["num_nodes"]), int(meta["feat_dim"]), int(meta["num_classes"])
    multi = bool(meta["multi_label"])

    rows = _read_tsv(path / "edges.tsv")
    edges = np.array(
        [(_node_id(r[0], n, "edges.tsv"), _node_id(r[1], n, "edges.tsv")) for r in rows], dtype=np.int64
    ).reshape(-1, 2)

    raw = (path / "features.bin").read_bytes()
    if len(raw) != 4 * n * d:
        raise BundleError(f"features.bin: expected {4 * n * d} bytes, found {len(raw)}")
    features = np.frombuffer(raw, dtype="<f4").reshape(n, d).astype(np.float64)

    if multi:
        labels = np.zeros((n, c), dtype=np.int64)
    else:
        labels = np.full(n, -1, dtype=np.int64)
    for r in _read_tsv(path / "labels.tsv"):
        v = _node_id(r[0], n, "labels.tsv")
        vals = [int(x) for x in r[1].split(",") if x] if len(r) > 1 else []
        if any(not 0 <= x < c for x in vals):
            raise BundleError(f"labels.tsv: label out of range for node {v}")
        if multi:
            labels[v, vals] = 1
        elif len(vals) == 1:
            labels[v] = vals[0]
        else:
            raise BundleError(f"labels.tsv: node {v} needs exactly one label")

    masks = {s: np.zeros(n, dtype=bool) for s in SPLITS}
    for r in _read_tsv(path / "masks.tsv"):
        v = _node_id(r[0], n, "masks.tsv")
        if len(r) < 2 or r[1] not in masks:
            raise BundleError(f"masks.tsv: node {v} has no valid split name")
        masks[r[1]][v] = True
    if (masks["train"] & masks["val"]).any() or (masks["train"] | masks["val"])[masks["test"]].any():
        raise BundleError("masks.tsv: splits overlap")

    g = from_edges(n, edges, features, labels, c, multi)
    return g.with_masks(masks["train"], masks["val"], masks["test"])


def save_bundle(graph: Graph, path) -> None:
    """Write the bundle; undirected edges once (u < v), self-loops omitted."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "num_nodes": graph.num_nodes,
        "feat_dim": graph.feat_dim,
        "num_classes": graph.num_classes,
        "multi_label": graph.multi_label,
    }
    (path / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    keep = graph.edge_dst < graph.edge_src
    lines = [f"{u}\t{v}" for u, v in zip(graph.edge_dst[keep], graph.edge_src[keep])]
    (path / "edges.tsv").write_text("".join(line + "\n" for line in lines))
    (path / "features.bin").write_bytes(graph.features.astype("<f4").tobytes())
    label_lines = []
    for v in range(graph.num_nodes):
        if graph.multi_label:
            label_lines.append(f"{v}\t" + ",".join(str(c) for c in np.flatnonzero(graph.labels[v])))
        elif graph.labels[v] >= 0:
            label_lines.append(f"{v}\t{int(graph.labels[v])}")
    (path / "labels.tsv").write_text("".join(line + "\n" for line in label_lines))
    mask_lines = []
    for name, m in zip(SPLITS, (graph.train_mask, graph.val_mask, graph._test_mask)):
        if m is not None:
            mask_lines += [f"{v}\t{name}" for v in np.flatnonzero(m)]
    (path / "masks.tsv").write_text("".join(line + "\n" for line in mask_lines))
