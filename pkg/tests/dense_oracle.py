"""Independent per-node numpy reference implementations of the aggregators."""

import numpy as np


def leaky(x, slope=0.2):
    return np.where(x > 0, x, slope * x)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def neighborhoods(graph):
    return [list(graph.neighbors(v)) for v in range(graph.num_nodes)]


def _softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def attention(kind, p, h, graph, heads, leaky_scores=True):
    W = p["W"]
    proj = h @ W
    n, dim = proj.shape
    d = dim // heads
    out = np.zeros((n, dim))
    nbrs = neighborhoods(graph)
    for v in range(n):
        for k in range(heads):
            cols = slice(k * d, (k + 1) * d)
            pv = proj[v, cols]
            scores = []
            for u in nbrs[v]:
                pu = proj[u, cols]
                if kind == "GAT-COS":
                    e = pu @ pv
                    e = leaky(e) if leaky_scores else e
                elif kind == "GAT-GEN-LINEAR":
                    e = p["w_gen"][cols] @ np.tanh(p["a_src"][cols] * pu + p["a_dst"][cols] * pv)
                else:
                    fwd = pu @ p["a_src"][cols] + pv @ p["a_dst"][cols]
                    if kind == "GAT-LINEAR":
                        e = np.tanh(fwd)
                        e = leaky(e) if leaky_scores else e
                    elif kind == "GAT-SYM":
                        rev = pv @ p["a_src"][cols] + pu @ p["a_dst"][cols]
                        e = leaky(fwd) + leaky(rev)
                    else:
                        e = leaky(fwd)
                scores.append(e)
            att = _softmax(np.array(scores))
            out[v, cols] = sum(a * proj[u, cols] for a, u in zip(att, nbrs[v]))
    return out


def node_aggregate(kind, p, h, graph, heads=2, leaky_scores=True):
    p = {k: np.asarray(v.data if hasattr(v, "data") else v) for k, v in p.items()}
    n = graph.num_nodes
    nbrs = neighborhoods(graph)
    deg = np.array([len(x) for x in nbrs], dtype=float)
    if kind == "SAGE-SUM":
        return np.array([h[nb].sum(axis=0) for nb in nbrs])
    if kind == "SAGE-MEAN":
        return np.array([h[nb].mean(axis=0) for nb in nbrs])
    if kind == "SAGE-MAX":
        return np.array([h[nb].max(axis=0) for nb in nbrs])
    if kind == "GCN":
        return np.array([sum(h[u] / np.sqrt(deg[v] * deg[u]) for u in nbrs[v]) for v in range(n)])
    if kind.startswith("GAT"):
        return attention(kind, p, h, graph, heads, leaky_scores)
    if kind == "GIN":
        x = np.array([(1 + p["eps"]) * h[v] + sum((h[u] for u in nbrs[v] if u != v), np.zeros(h.shape[1])) for v in range(n)])
        return np.maximum(x @ p["W1"] + p["b1"], 0) @ p["W2"] + p["b2"]
    if kind == "GeniePath":
        breadth = np.tanh(attention("GAT", p, h, graph, heads, leaky_scores))
        d = h.shape[1]
        gates = np.concatenate([h, breadth], axis=1) @ p["W_gate"] + p["b_gate"]
        i, f, o = (sigmoid(gates[:, j * d : (j + 1) * d]) for j in range(3))
        cand = np.tanh(gates[:, 3 * d :])
        return o * np.tanh(f * h + i * cand)
    raise ValueError(kind)


def lstm_layer_aggregate(p, outputs):
    p = {k: np.asarray(v.data if hasattr(v, "data") else v) for k, v in p.items()}
    n, d = outputs[0].shape
    hid, cell = np.zeros((n, d)), np.zeros((n, d))
    scores = []
    for x in outputs:
        g = np.concatenate([x, hid], axis=1) @ p["W"] + p["b"]
        i, f, o = (sigmoid(g[:, j * d : (j + 1) * d]) for j in range(3))
        cell = f * cell + i * np.tanh(g[:, 3 * d :])
        hid = o * np.tanh(cell)
        scores.append(hid @ p["att"])
    s = np.stack(scores, axis=1)
    w = np.exp(s - s.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    return sum(w[:, [j]] * x for j, x in enumerate(outputs))
