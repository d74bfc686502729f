import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import dense_oracle as oracle
from conftest import random_graph
from gradcheck import max_rel_error
from sane import autodiff as ad
from sane.aggregators import (
    GAT_FAMILY,
    LAYER_AGGS,
    MLP_DEPTHS,
    MLP_WIDTHS,
    NODE_AGGS,
    SKIPS,
    LayerAgg,
    NodeAgg,
    Skip,
    attention_weights,
    init_layer_params,
    init_mlp_params,
    init_node_params,
    layer_agg_width,
    layer_aggregate,
    mlp_node_aggregate,
    node_aggregate,
    skip_apply,
)
from sane.autodiff import Tensor
from sane.graph import from_edges

DIM, HEADS = 6, 2


def params_for(kind, seed=0, dim=DIM):
    return init_node_params(kind, dim, HEADS, np.random.default_rng(seed))


def relabel(graph, perm):
    """The same graph with node v renamed perm[v]."""
    edges = np.stack([perm[graph.edge_dst], perm[graph.edge_src]], axis=1)
    feats = np.empty_like(graph.features)
    feats[perm] = graph.features
    labels = np.empty_like(graph.labels)
    labels[perm] = graph.labels
    return from_edges(graph.num_nodes, edges, feats, labels, graph.num_classes)


def test_enum_sizes_and_order():
    assert len(NODE_AGGS) == 11 and len(LAYER_AGGS) == 3 and len(SKIPS) == 2
    assert [k.value for k in NODE_AGGS] == [
        "SAGE-SUM", "SAGE-MEAN", "SAGE-MAX", "GCN", "GAT", "GAT-SYM",
        "GAT-COS", "GAT-LINEAR", "GAT-GEN-LINEAR", "GIN", "GeniePath",
    ]  # fmt: skip
    assert [k.value for k in LAYER_AGGS] == ["CONCAT", "MAX", "LSTM"]
    assert [k.value for k in SKIPS] == ["IDENTITY", "ZERO"]


@pytest.mark.parametrize("kind", NODE_AGGS, ids=lambda k: k.value)
@pytest.mark.parametrize("leaky", [True, False])
def test_node_aggregate_matches_dense_oracle(kind, leaky):
    g = random_graph(n=9, p=0.35, seed=2)
    h = np.random.default_rng(1).normal(size=(9, DIM))
    p = params_for(kind, seed=3)
    if "eps" in p:
        p["eps"].data[...] = 0.3
    out = node_aggregate(kind, p, Tensor(h), g, HEADS, leaky).data
    ref = oracle.node_aggregate(kind.value, p, h, g, HEADS, leaky)
    assert out.shape == (9, DIM)
    np.testing.assert_allclose(out, ref, atol=1e-10)


@pytest.mark.parametrize("kind", NODE_AGGS, ids=lambda k: k.value)
def test_node_aggregate_gradients(kind):
    g = random_graph(n=6, p=0.5, seed=4)
    p = params_for(kind, seed=5, dim=4)
    names = list(p)
    h = np.random.default_rng(6).uniform(-2, 2, size=(6, 4))

    def fn(x, *ps):
        return node_aggregate(kind, dict(zip(names, ps)), x, g, HEADS)

    assert max_rel_error(fn, [h] + [p[k].data for k in names]) < 1e-4


def test_sage_sum_on_isolated_node_returns_own_row():
    g = from_edges(3, np.array([[0, 1]]), np.zeros((3, 1)), np.zeros(3, int), 1)
    h = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    out = node_aggregate(NodeAgg.SAGE_SUM, {}, Tensor(h), g).data
    np.testing.assert_array_equal(out[2], h[2])


def test_gcn_two_node_clique_averages():
    g = from_edges(2, np.array([[0, 1]]), np.zeros((2, 1)), np.zeros(2, int), 1)
    h = np.array([[2.0, 0.0], [4.0, 6.0]])
    out = node_aggregate(NodeAgg.GCN, {}, Tensor(h), g).data
    np.testing.assert_allclose(out, [[3.0, 3.0], [3.0, 3.0]], atol=1e-15)


def test_gcn_equals_dense_normalized_adjacency():
    g = random_graph(n=40, p=0.1, seed=8)
    a = np.zeros((40, 40))
    for v in range(40):
        a[v, g.neighbors(v)] = 1.0
    d = np.diag(a.sum(axis=1) ** -0.5)
    h = np.random.default_rng(0).normal(size=(40, 3))
    out = node_aggregate(NodeAgg.GCN, {}, Tensor(h), g).data
    np.testing.assert_allclose(out, d @ a @ d @ h, atol=1e-10)


def test_gat_zero_attention_is_mean_of_projection():
    g = random_graph(n=10, seed=1)
    p = params_for(NodeAgg.GAT)
    p["a_src"].data[:] = 0.0
    p["a_dst"].data[:] = 0.0
    h = Tensor(np.random.default_rng(2).normal(size=(10, DIM)))
    out = node_aggregate(NodeAgg.GAT, p, h, g).data
    mean = node_aggregate(NodeAgg.SAGE_MEAN, {}, h @ p["W"], g).data
    np.testing.assert_allclose(out, mean, atol=1e-10)


@pytest.mark.parametrize("kind", GAT_FAMILY, ids=lambda k: k.value)
def test_attention_weights_are_distributions(kind):
    g = random_graph(n=12, seed=5)
    h = Tensor(np.random.default_rng(5).normal(size=(12, DIM)))
    att = attention_weights(kind, params_for(kind), h, g, HEADS)
    assert att.shape == (g.targets.size, HEADS)
    assert np.all(att >= 0)
    sums = np.zeros((12, HEADS))
    np.add.at(sums, g.edge_dst, att)
    np.testing.assert_allclose(sums, 1.0, atol=1e-9)


@given(st.integers(0, 10_000))
def test_permutation_equivariance(seed):
    g = random_graph(n=8, p=0.4, seed=seed % 97)
    perm = np.random.default_rng(seed).permutation(8)
    pg = relabel(g, perm)
    for kind in NODE_AGGS:
        p = params_for(kind, seed=1)
        out = node_aggregate(kind, p, Tensor(g.features @ np.ones((5, DIM)) * 0.3), g).data
        pout = node_aggregate(kind, p, Tensor(pg.features @ np.ones((5, DIM)) * 0.3), pg).data
        np.testing.assert_allclose(pout[perm], out, atol=1e-10)


def test_gin_zero_eps_identity_mlp_equals_sage_sum():
    g = random_graph(n=10, seed=3)
    h = Tensor(np.abs(np.random.default_rng(0).normal(size=(10, DIM))))
    eye = np.eye(DIM)
    p = {
        "W1": Tensor(eye),
        "b1": Tensor(np.zeros(DIM)),
        "W2": Tensor(eye),
        "b2": Tensor(np.zeros(DIM)),
        "eps": Tensor(0.0),
    }
    gin = node_aggregate(NodeAgg.GIN, p, h, g).data
    np.testing.assert_allclose(gin, node_aggregate(NodeAgg.SAGE_SUM, {}, h, g).data, atol=1e-12)


def test_gin_eps_starts_at_zero():
    assert params_for(NodeAgg.GIN)["eps"].item() == 0.0


def test_dimension_mismatch_errors():
    g = random_graph(n=5)
    with pytest.raises(ad.ShapeError):
        node_aggregate(NodeAgg.GAT, params_for(NodeAgg.GAT), Tensor(np.zeros((5, DIM + 2))), g)
    with pytest.raises(ad.ShapeError):
        node_aggregate(NodeAgg.SAGE_SUM, {}, Tensor(np.zeros((4, DIM))), g)
    with pytest.raises(ValueError):
        init_node_params(NodeAgg.GAT, 5, 2, np.random.default_rng(0))


# --- layer aggregators and skips --------------------------------------------------


def layer_outputs(k=3, n=7, d=32, seed=0):
    rng = np.random.default_rng(seed)
    return [Tensor(rng.normal(size=(n, d))) for _ in range(k)]


def test_concat_width():
    out = layer_aggregate(LayerAgg.CONCAT, {}, layer_outputs())
    assert out.shape == (7, 96) == (7, layer_agg_width(LayerAgg.CONCAT, 32, 3))


def test_max_idempotent_and_elementwise():
    x = layer_outputs(1)[0]
    np.testing.assert_array_equal(layer_aggregate(LayerAgg.MAX, {}, [x, x, x]).data, x.data)
    outs = layer_outputs()
    np.testing.assert_array_equal(
        layer_aggregate(LayerAgg.MAX, {}, outs).data, np.max([o.data for o in outs], axis=0)
    )


@pytest.mark.parametrize("kind", LAYER_AGGS, ids=lambda k: k.value)
def test_single_active_layer_passes_through(kind):
    outs = layer_outputs()
    p = init_layer_params(kind, 32, np.random.default_rng(0))
    out = layer_aggregate(kind, p, outs, active_mask=[False, True, False]).data
    np.testing.assert_allclose(out, outs[1].data, atol=1e-12)


def test_active_mask_selects_layers():
    outs = layer_outputs()
    out = layer_aggregate(LayerAgg.CONCAT, {}, outs, active_mask=[True, False, True])
    np.testing.assert_array_equal(out.data, np.concatenate([outs[0].data, outs[2].data], axis=1))


def test_empty_active_set_errors():
    with pytest.raises(ValueError):
        layer_aggregate(LayerAgg.MAX, {}, layer_outputs(), active_mask=[False] * 3)


def test_lstm_matches_oracle_and_is_convex():
    outs = layer_outputs(d=4)
    p = init_layer_params(LayerAgg.LSTM, 4, np.random.default_rng(3))
    out = layer_aggregate(LayerAgg.LSTM, p, outs).data
    np.testing.assert_allclose(out, oracle.lstm_layer_aggregate(p, [o.data for o in outs]), atol=1e-12)
    stack = np.stack([o.data for o in outs])
    assert np.all(out <= stack.max(axis=0) + 1e-12) and np.all(out >= stack.min(axis=0) - 1e-12)


@pytest.mark.parametrize("kind", LAYER_AGGS, ids=lambda k: k.value)
def test_layer_aggregate_gradients(kind):
    rng = np.random.default_rng(9)
    xs = [rng.uniform(-2, 2, size=(4, 3)) for _ in range(3)]
    p = init_layer_params(kind, 3, rng)
    names = list(p)

    def fn(a, b, c, *ps):
        return layer_aggregate(kind, dict(zip(names, ps)), [a, b, c])

    assert max_rel_error(fn, xs + [p[k].data for k in names]) < 1e-4


def test_skip_ops():
    h = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    np.testing.assert_array_equal(skip_apply(Skip.ZERO, h).data, [0.0, 0.0, 0.0])
    assert skip_apply(Skip.IDENTITY, h) is h
    loss = ad.total(skip_apply(Skip.ZERO, h) * 5.0 + h * 0.0)
    (g,) = ad.backward(loss, [h])
    np.testing.assert_array_equal(g, [0.0, 0.0, 0.0])


# --- MLP aggregator -------------------------------------------------------------


def test_mlp_depth_one_is_linear_map_of_neighborhood_sum():
    g = random_graph(n=8)
    h = Tensor(np.random.default_rng(0).normal(size=(8, 5)))
    p = init_mlp_params(5, 8, 1, np.random.default_rng(1))
    out = mlp_node_aggregate(8, 1, p, h, g).data
    summed = node_aggregate(NodeAgg.SAGE_SUM, {}, h, g).data
    np.testing.assert_allclose(out, summed @ p["W0"].data + p["b0"].data, atol=1e-12)


def test_mlp_zero_weights_give_zero():
    g = random_graph(n=8)
    p = init_mlp_params(5, 16, 3, np.random.default_rng(1))
    for t in p.values():
        t.data[...] = 0.0
    out = mlp_node_aggregate(16, 3, p, Tensor(np.ones((8, 5))), g).data
    assert out.shape == (8, 16) and np.all(out == 0.0)


def test_mlp_grid_is_enforced():
    assert len(MLP_WIDTHS) * len(MLP_DEPTHS) == 12
    with pytest.raises(ValueError):
        init_mlp_params(5, 12, 1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        mlp_node_aggregate(8, 4, {}, Tensor(np.ones((3, 5))), random_graph(n=3))


def test_mlp_gradients():
    g = random_graph(n=6, seed=2)
    p = init_mlp_params(3, 8, 2, np.random.default_rng(2))
    names = list(p)
    h = np.random.default_rng(3).uniform(-2, 2, size=(6, 3))

    def fn(x, *ps):
        return mlp_node_aggregate(8, 2, dict(zip(names, ps)), x, g)

    assert max_rel_error(fn, [h] + [p[k].data for k in names]) < 1e-4
