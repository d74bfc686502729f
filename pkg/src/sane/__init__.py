"""Differentiable search over GNN node aggregators, skips and layer aggregators."""

__version__ = "0.1.0"
