"""Numerical toolkit for quasi-periodic SL(2,R) cocycles over circle
rotations: exact composition of hyperbolic factors, return-time
combinatorics, inductive construction of cocycles with large finite-scale
Lyapunov exponents, and local surgery that collapses them."""

__version__ = "0.1.0"

from .kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
