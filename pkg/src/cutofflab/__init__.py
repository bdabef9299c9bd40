"""Numerical laboratory for cutoff of non-negatively curved Langevin diffusions."""

__version__ = "0.1.0"
