"""Exact-diagonalization toolkit for equilibration and thermalization bounds on finite spin lattices."""

__version__ = "0.1.0"
