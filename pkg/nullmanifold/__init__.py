"""Null-space manifold sampling and Gaussian-process distance fields for redundant manipulators."""

__version__ = "0.1.0"
