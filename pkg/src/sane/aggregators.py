"""Candidate operations: node aggregators, layer aggregators and skip ops.

Enum order is significant: it fixes the coordinates of the architecture
vectors and the tie-break order of derivation.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import Graph

Params = dict[str, Tensor]


class NodeAgg(Enum):
    SAGE_SUM = "SAGE-SUM"
    SAGE_MEAN = "SAGE-MEAN"
    SAGE_MAX = "SAGE-MAX"
    GCN = "GCN"
    GAT = "GAT"
    GAT_SYM = "GAT-SYM"
    GAT_COS = "GAT-COS"
    GAT_LINEAR = "GAT-LINEAR"
    GAT_GEN_LINEAR = "GAT-GEN-LINEAR"
    GIN = "GIN"
    GENIEPATH = "GeniePath"


class LayerAgg(Enum):
    CONCAT = "CONCAT"
    MAX = "MAX"
    LSTM = "LSTM"


class Skip(Enum):
    IDENTITY = "IDENTITY"
    ZERO = "ZERO"


NODE_AGGS = tuple(NodeAgg)
LAYER_AGGS = tuple(LayerAgg)
SKIPS = tuple(Skip)

GAT_FAMILY = (NodeAgg.GAT, NodeAgg.GAT_SYM, NodeAgg.GAT_COS, NodeAgg.GAT_LINEAR, NodeAgg.GAT_GEN_LINEAR)
MLP_WIDTHS = (8, 16, 32, 64)
MLP_DEPTHS = (1, 2, 3)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None, name=None) -> Tensor:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    shape = (fan_in, fan_out) if shape is None else shape
    return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True, name=name)


def zeros(shape, name=None) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def _attention_params(dim: int, heads: int, rng, with_gate: bool = False) -> Params:
    d_head = dim // heads
    p = {
        "W": glorot(rng, dim, dim),
        "a_src": glorot(rng, d_head, 1, shape=(dim,)),
        "a_dst": glorot(rng, d_head, 1, shape=(dim,)),
    }
    if with_gate:
        p["w_gen"] = glorot(rng, d_head, 1, shape=(dim,))
    return p


def init_node_params(kind: NodeAgg, dim: int, heads: int, rng: np.random.Generator) -> Params:
    """Fresh parameters for one node aggregator working at width ``dim``."""
    if kind in GAT_FAMILY and dim % heads:
        raise ValueError(f"width {dim} not divisible by {heads} heads")
    if kind in (NodeAgg.SAGE_SUM, NodeAgg.SAGE_MEAN, NodeAgg.SAGE_MAX, NodeAgg.GCN):
        return {}
    if kind is NodeAgg.GAT_COS:
        return {"W": glorot(rng, dim, dim)}
    if kind in GAT_FAMILY:
        return _attention_params(dim, heads, rng, with_gate=kind is NodeAgg.GAT_GEN_LINEAR)
    if kind is NodeAgg.GIN:
        return {
            "W1": glorot(rng, dim, dim),
            "b1": zeros(dim),
            "W2": glorot(rng, dim, dim),
            "b2": zeros(dim),
            "eps": zeros(()),
        }
    if kind is NodeAgg.GENIEPATH:
        if dim % heads:
            raise ValueError(f"width {dim} not divisible by {heads} heads")
        p = _attention_params(dim, heads, rng)
        p["W_gate"] = glorot(rng, 2 * dim, 4 * dim)
        p["b_gate"] = zeros(4 * dim)
        return p
    raise ValueError(f"unknown node aggregator {kind}")


def _check_dim(params: Params, key: str, h: Tensor) -> None:
    if key in params and params[key].shape[0] != h.shape[1]:
        raise ad.ShapeError(f"{key} expects input width {params[key].shape[0]}, got {h.shape[1]}")


def _scores(kind: NodeAgg, params: Params, h: Tensor, g: Graph, heads: int, leaky_scores: bool):
    """Projected node rows [N, dim] and unnormalized edge scores [E, heads]."""
    proj = h @ params["W"]
    if kind is NodeAgg.GAT_COS:
        e = ad.edge_dot(proj, g.src_index, g.segments, heads)
        e = ad.leaky_relu(e) if leaky_scores else e
    elif kind is NodeAgg.GAT_GEN_LINEAR:
        inner = ad.take_rows(proj * params["a_src"], g.src_index) + ad.take_rows(proj * params["a_dst"], g.dst_index)
        e = ad.tanh(inner) @ ad.head_columns(params["w_gen"], heads)
    else:
        s = ad.head_sum(proj * params["a_src"], heads)
        t = ad.head_sum(proj * params["a_dst"], heads)
        forward = ad.take_rows(s, g.src_index) + ad.take_rows(t, g.dst_index)
        if kind is NodeAgg.GAT_LINEAR:
            e = ad.tanh(forward)
            e = ad.leaky_relu(e) if leaky_scores else e
        else:
            e = ad.leaky_relu(forward)
            if kind is NodeAgg.GAT_SYM:
                e = e + ad.leaky_relu(ad.take_rows(s, g.dst_index) + ad.take_rows(t, g.src_index))
    return proj, e


def _attend(kind: NodeAgg, params: Params, h: Tensor, g: Graph, heads: int, leaky_scores: bool) -> Tensor:
    proj, e = _scores(kind, params, h, g, heads, leaky_scores)
    att = ad.segment_softmax(e, g.segments)
    return ad.neighbor_sum(proj, g.src_index, g.segments, att)


def attention_weights(kind: NodeAgg, params: Params, h: Tensor, g: Graph, heads: int, leaky_scores=True) -> np.ndarray:
    """Per-edge attention [E, heads] of a GAT-family aggregator."""
    with ad.no_grad():
        _, e = _scores(kind, params, h, g, heads, leaky_scores)
        return ad.segment_softmax(e, g.segments).data


def node_aggregate(
    kind: NodeAgg,
    params: Params,
    h: Tensor,
    graph: Graph,
    heads: int = 2,
    leaky_scores: bool = True,
) -> Tensor:
    """AGG_node over Ñ(v) for every node; output width equals input width."""
    if h.shape[0] != graph.num_nodes:
        raise ad.ShapeError(f"{h.shape[0]} feature rows for {graph.num_nodes} nodes")
    for key in ("W", "W1"):
        _check_dim(params, key, h)
    if kind is NodeAgg.SAGE_MAX:
        return ad.segment_reduce("max", ad.take_rows(h, graph.src_index), graph.segments)
    if kind is NodeAgg.SAGE_SUM:
        return ad.neighbor_sum(h, graph.src_index, graph.segments)
    if kind is NodeAgg.SAGE_MEAN:
        return ad.neighbor_sum(h, graph.src_index, graph.segments, graph.mean_coef)
    if kind is NodeAgg.GCN:
        return ad.neighbor_sum(h, graph.src_index, graph.segments, graph.gcn_coef)
    if kind in GAT_FAMILY:
        return _attend(kind, params, h, graph, heads, leaky_scores)
    if kind is NodeAgg.GIN:
        # (1 + eps) h_v + sum over N(v); the self-loop is excluded from the sum
        neigh = ad.neighbor_sum(h, graph.open_src_index, graph.open_segments)
        x = neigh + h * (params["eps"] + 1.0)
        hidden = ad.relu(x @ params["W1"] + params["b1"])
        return hidden @ params["W2"] + params["b2"]
    if kind is NodeAgg.GENIEPATH:
        # breadth: attention aggregation; depth: one LSTM-style gated step against h_v
        breadth = ad.tanh(_attend(NodeAgg.GAT, params, h, graph, heads, leaky_scores))
        d = h.shape[1]
        gates = ad.concat([h, breadth], axis=1) @ params["W_gate"] + params["b_gate"]
        i = ad.sigmoid(ad.slice_cols(gates, 0, d))
        f = ad.sigmoid(ad.slice_cols(gates, d, 2 * d))
        o = ad.sigmoid(ad.slice_cols(gates, 2 * d, 3 * d))
        cand = ad.tanh(ad.slice_cols(gates, 3 * d, 4 * d))
        cell = f * h + i * cand
        return o * ad.tanh(cell)
    raise ValueError(f"unknown node aggregator {kind}")


# --- MLP aggregator -------------------------------------------------------------


def init_mlp_params(in_dim: int, width: int, depth: int, rng: np.random.Generator) -> Params:
    if width not in MLP_WIDTHS or depth not in MLP_DEPTHS:
        raise ValueError(f"MLP (width={width}, depth={depth}) outside grid {MLP_WIDTHS} x {MLP_DEPTHS}")
    dims = [in_dim] + [width] * depth
    p: Params = {}
    for i in range(depth):
        p[f"W{i}"] = glorot(rng, dims[i], dims[i + 1])
        p[f"b{i}"] = zeros(dims[i + 1])
    return p


def mlp_node_aggregate(width: int, depth: int, params: Params, h: Tensor, graph: Graph) -> Tensor:
    """MLP applied to the neighborhood sum over Ñ(v); output width ``width``."""
    if width not in MLP_WIDTHS or depth not in MLP_DEPTHS:
        raise ValueError(f"MLP (width={width}, depth={depth}) outside grid {MLP_WIDTHS} x {MLP_DEPTHS}")
    x = ad.neighbor_sum(h, graph.src_index, graph.segments)
    for i in range(depth):
        x = x @ params[f"W{i}"] + params[f"b{i}"]
        if i < depth - 1:
            x = ad.relu(x)
    return x


# --- layer aggregators and skips -------------------------------------------------


def init_layer_params(kind: LayerAgg, dim: int, rng: np.random.Generator) -> Params:
    if kind is LayerAgg.LSTM:
        return {"W": glorot(rng, 2 * dim, 4 * dim), "b": zeros(4 * dim), "att": glorot(rng, dim, 1, shape=(dim,))}
    return {}


def layer_aggregate(kind: LayerAgg, params: Params, outputs: list[Tensor], active_mask=None) -> Tensor:
    """Combine per-layer node representations; inactive layers are left out."""
    if active_mask is not None:
        outputs = [x for x, keep in zip(outputs, active_mask) if keep]
    if not outputs:
        raise ValueError("layer aggregation needs at least one active layer")
    if kind is LayerAgg.CONCAT:
        return outputs[0] if len(outputs) == 1 else ad.concat(outputs, axis=1)
    if kind is LayerAgg.MAX:
        out = outputs[0]
        for x in outputs[1:]:
            out = ad.maximum(out, x)
        return out
    if kind is LayerAgg.LSTM:
        n, d = outputs[0].shape
        hid = Tensor(np.zeros((n, d)))
        cell = Tensor(np.zeros((n, d)))
        scores = []
        for x in outputs:
            gates = ad.concat([x, hid], axis=1) @ params["W"] + params["b"]
            i = ad.sigmoid(ad.slice_cols(gates, 0, d))
            f = ad.sigmoid(ad.slice_cols(gates, d, 2 * d))
            o = ad.sigmoid(ad.slice_cols(gates, 2 * d, 3 * d))
            cand = ad.tanh(ad.slice_cols(gates, 3 * d, 4 * d))
            cell = f * cell + i * cand
            hid = o * ad.tanh(cell)
            scores.append(ad.head_sum(hid * params["att"], 1))
        weights = ad.softmax(ad.concat(scores, axis=1), axis=1)
        out = None
        for j, x in enumerate(outputs):
            term = ad.row_scale(x, ad.slice_cols(weights, j, j + 1))
            out = term if out is None else out + term
        return out
    raise ValueError(f"unknown layer aggregator {kind}")


def layer_agg_width(kind: LayerAgg, dim: int, num_layers: int) -> int:
    return dim * num_layers if kind is LayerAgg.CONCAT else dim


def skip_apply(kind: Skip, h: Tensor) -> Tensor:
    if kind is Skip.IDENTITY:
        return h
    return ad.zeros_like(h)
