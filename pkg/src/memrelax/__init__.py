"""Relaxation toolkit for determinant-constrained membrane energies."""

__version__ = "0.1.0"
