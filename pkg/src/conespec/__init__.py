"""Spectral toolkit for -4Δ+R on manifolds with isolated conical singularities."""

__version__ = "0.1.0"
