"""Discrete spinor observables and spin correlations of the critical planar Ising model."""

__version__ = "0.1.0"
