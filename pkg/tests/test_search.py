import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_graph
from sane import autodiff as ad
from sane.aggregators import LAYER_AGGS, NODE_AGGS, SKIPS, LayerAgg, NodeAgg, Skip
from sane.genotype import Genotype, GenotypeError
from sane.search import (
    SearchConfig,
    derive,
    enumerate_space_size,
    epsilon_explore_step,
    read_history,
    run_search,
    write_history,
)
from sane.supernet import ArchParams


def quick(**kw):
    base = dict(epochs=3, K=2, hidden_dim=8, heads=1, dropout=0.0, seed=0)
    base.update(kw)
    return SearchConfig(**base)


# --- space size and derivation ------------------------------------------------------


def test_space_sizes():
    assert enumerate_space_size(1) == 66
    assert enumerate_space_size(2) == 1452
    assert enumerate_space_size(3) == 31944
    with pytest.raises(ValueError):
        enumerate_space_size(0)


def test_derive_last_index():
    node = np.zeros(11)
    node[10] = 5.0
    arch = ArchParams.from_arrays([node], [np.zeros(2)], np.zeros(3))
    g = derive(arch)
    assert g.node_ops[0] is NodeAgg.GENIEPATH


def test_derive_ties_go_to_index_zero():
    arch = ArchParams.from_arrays([np.zeros(11)] * 2, [np.zeros(2)] * 2, np.zeros(3))
    g = derive(arch)
    assert g.node_ops == (NODE_AGGS[0], NODE_AGGS[0])
    assert g.skip_ops == (Skip.IDENTITY, Skip.IDENTITY)
    assert g.layer_op is LayerAgg.CONCAT


def test_derive_top_k_not_implemented():
    with pytest.raises(NotImplementedError, match="k=1"):
        derive(ArchParams.init(1, np.random.default_rng(0)), k=2)


@given(st.integers(1, 4), st.integers(0, 10_000), st.floats(-20, 20))
def test_derive_matches_exhaustive_oracle_and_shift(K, seed, c):
    arch = ArchParams.init(K, np.random.default_rng(seed), scale=2.0)
    got = derive(arch)

    def best(vec, ops):
        w = np.exp(vec - vec.max())
        w = w / w.sum()
        top = 0
        for i in range(len(ops)):
            if w[i] > w[top]:
                top = i
        return ops[top]

    assert got.node_ops == tuple(best(a.data, NODE_AGGS) for a in arch.alpha_n)
    assert got.skip_ops == tuple(best(a.data, SKIPS) for a in arch.alpha_s)
    assert got.layer_op == best(arch.alpha_l.data, LAYER_AGGS)
    shifted = arch.copy()
    for a in shifted.tensors():
        a.data += c
    assert derive(shifted) == got


# --- genotype serialization ---------------------------------------------------------


def test_genotype_round_trip():
    g = Genotype((NodeAgg.GAT_COS, NodeAgg.SAGE_MAX), (Skip.ZERO, Skip.IDENTITY), LayerAgg.LSTM)
    text = g.to_json(seed=3, epochs=10)
    assert Genotype.from_json(text) == g
    assert '"GAT-COS"' in text


def test_genotype_errors_list_legal_names():
    with pytest.raises(GenotypeError, match="GAT-FOO.*GCN"):
        Genotype.from_dict({"node_ops": ["GAT-FOO"], "skip_ops": ["IDENTITY"], "layer_op": "MAX"})
    with pytest.raises(GenotypeError):
        Genotype.from_dict({"node_ops": ["GCN"], "skip_ops": [], "layer_op": "MAX"})
    with pytest.raises(GenotypeError):
        Genotype.from_dict({"node_ops": ["GCN"], "skip_ops": ["ZERO"], "layer_op": "MAX", "K": 2})
    with pytest.raises(GenotypeError):
        Genotype.from_json("{not json")


# --- epsilon exploration ------------------------------------------------------------


def test_epsilon_zero_is_full_mixture():
    arch = ArchParams.init(3, np.random.default_rng(0))
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert all(e is None for e in epsilon_explore_step(arch, 0.0, rng).edges())


def test_epsilon_one_pins_every_edge():
    arch = ArchParams.init(3, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    for _ in range(50):
        c = epsilon_explore_step(arch, 1.0, rng)
        assert all(e is not None for e in c.edges())
        assert all(0 <= n < 11 for n in c.node) and all(0 <= s < 2 for s in c.skip) and 0 <= c.layer < 3


def test_epsilon_half_frequency():
    arch = ArchParams.init(1, np.random.default_rng(0))
    rng = np.random.default_rng(2)
    draws = [epsilon_explore_step(arch, 0.5, rng) for _ in range(10_000)]
    for picked in ([d.node[0] for d in draws], [d.skip[0] for d in draws], [d.layer for d in draws]):
        freq = np.mean([p is not None for p in picked])
        assert 0.48 <= freq <= 0.52


def test_epsilon_range_checked():
    arch = ArchParams.init(1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        epsilon_explore_step(arch, 1.5, np.random.default_rng(0))
    with pytest.raises(ValueError):
        SearchConfig(epsilon=-0.1)
    with pytest.raises(ValueError):
        SearchConfig(epochs=0)


# --- search loop --------------------------------------------------------------------


class RecordingAdam(ad.Adam):
    """Adam that logs its steps and checks nothing outside its own group moves."""

    log: list = []
    watched: list = []

    def step(self, grads=None):
        own = {id(p) for p in self.params}
        others = [(t, t.data.copy()) for t in RecordingAdam.watched if id(t) not in own]
        before = [p.data.copy() for p in self.params]
        super().step(grads)
        for t, snap in others:
            assert np.array_equal(t.data, snap)
        RecordingAdam.log.append((len(self.params), sum(not np.array_equal(p.data, b) for p, b in zip(self.params, before))))


def _recorded_search(monkeypatch, graph, config):
    from sane import search as search_mod
    from sane.supernet import SuperNet

    monkeypatch.setattr(ad, "Adam", RecordingAdam)
    RecordingAdam.log = []
    net = SuperNet(graph.feat_dim, graph.num_classes, K=config.K, hidden=config.hidden_dim, heads=config.heads, dropout=0.0)
    arch = ArchParams.init(config.K, np.random.default_rng(0))
    RecordingAdam.watched = net.parameters() + arch.tensors()
    result = search_mod.search(net, arch, graph, config)
    return net, arch, result


def test_single_epoch_takes_one_alpha_step_then_one_weight_step(monkeypatch, small_graph):
    net, arch, result = _recorded_search(monkeypatch, small_graph, quick(epochs=1))
    n_alpha = len(arch.tensors())
    assert len(RecordingAdam.log) == 2
    assert RecordingAdam.log[0][0] == n_alpha and RecordingAdam.log[0][1] > 0
    assert RecordingAdam.log[1][0] == len(net.parameters()) and RecordingAdam.log[1][1] > 0
    assert len(result.history) == 1


def test_alpha_and_weight_updates_are_isolated(monkeypatch, small_graph):
    _recorded_search(monkeypatch, small_graph, quick(epochs=4))
    assert len(RecordingAdam.log) == 8


def test_zero_alpha_rate_freezes_alpha(small_graph):
    from sane.search import search
    from sane.supernet import SuperNet

    cfg = quick(epochs=5, lr_alpha=0.0)
    net = SuperNet(small_graph.feat_dim, small_graph.num_classes, K=2, hidden=8, heads=1, dropout=0.0)
    arch = ArchParams.init(2, np.random.default_rng(0))
    before = [a.data.copy() for a in arch.tensors()]
    w_before = [p.data.copy() for p in net.parameters()]
    search(net, arch, small_graph, cfg)
    for a, b in zip(arch.tensors(), before):
        assert np.array_equal(a.data, b)
    assert any(not np.array_equal(p.data, b) for p, b in zip(net.parameters(), w_before))


def test_search_requires_masks(small_graph):
    from dataclasses import replace

    g = replace(small_graph, val_mask=np.zeros(small_graph.num_nodes, bool))
    with pytest.raises(ValueError, match="val"):
        run_search(g, quick())


def test_alpha_stays_finite_and_history_complete(small_graph):
    _, result = run_search(small_graph, quick(epochs=6, lr_alpha=0.05, epsilon=0.5))
    assert len(result.history) == 6
    assert [r.epoch for r in result.history] == list(range(6))
    assert all(np.all(np.isfinite(a.data)) for a in result.arch.tensors())
    assert result.genotype == derive(result.arch)


def test_search_is_bit_reproducible(small_graph):
    _, a = run_search(small_graph, quick(epochs=4, dropout=0.3, epsilon=0.3))
    _, b = run_search(small_graph, quick(epochs=4, dropout=0.3, epsilon=0.3))
    for x, y in zip(a.arch.tensors(), b.arch.tensors()):
        assert x.data.tobytes() == y.data.tobytes()
    assert [(r.train_loss, r.val_loss) for r in a.history] == [(r.train_loss, r.val_loss) for r in b.history]


def test_history_csv_round_trip(tmp_path, small_graph):
    _, result = run_search(small_graph, quick(epochs=3))
    path = tmp_path / "history.csv"
    write_history(result.history, path)
    assert path.read_text().splitlines()[0] == "epoch,train_loss,val_loss,val_acc"
    assert read_history(path) == result.history


def test_multilabel_search_runs():
    g = random_graph(n=14, seed=2, multi=True)
    _, result = run_search(g, quick(epochs=2))
    assert np.isfinite(result.history[-1].val_loss)


@pytest.mark.slow
def test_planted_search_learns(planted):
    _, result = run_search(planted, SearchConfig(epochs=200, K=2, hidden_dim=16, seed=0))
    first, last = result.history[0], result.history[-1]
    assert last.train_loss < first.train_loss
    assert last.val_acc > 1.0 / planted.num_classes + 0.1
