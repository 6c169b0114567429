"""Simulation and spectral analysis of dynamical percolation."""

__version__ = "0.1.0"
