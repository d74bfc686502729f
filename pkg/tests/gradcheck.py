"""Central finite-difference oracle for gradient tests."""

import numpy as np

from sane import autodiff as ad


def numeric_grads(fn, arrays, weights, h=1e-5):
    grads = []
    for k, x in enumerate(arrays):
        g = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            vals = []
            for step in (h, -h):
                shifted = [a.copy() for a in arrays]
                shifted[k][idx] += step
                with ad.no_grad():
                    out = fn(*[ad.Tensor(a) for a in shifted]).data
                vals.append(float(np.sum(out * weights)))
            g[idx] = (vals[0] - vals[1]) / (2 * h)
        grads.append(g)
    return grads


def analytic_grads(fn, arrays, weights):
    tensors = [ad.Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = fn(*tensors)
    loss = ad.total(out * ad.Tensor(weights))
    return ad.backward(loss, tensors)


def rel_error(a, n):
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale < 1e-10:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def max_rel_error(fn, arrays, seed=0, h=1e-5):
    """Largest relative error between backward() and central differences of sum(fn(*x) * R)."""
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    with ad.no_grad():
        shape = fn(*[ad.Tensor(a) for a in arrays]).shape
    weights = np.random.default_rng(seed).normal(size=shape)
    ana = analytic_grads(fn, arrays, weights)
    num = numeric_grads(fn, arrays, weights, h)
    return max(rel_error(a, n) for a, n in zip(ana, num))
