"""Percolation experiments on hierarchical tree-like graphs."""

__version__ = "0.1.0"
