"""Numerical Dirichlet problem for prescribed mean curvature Killing graphs."""

__version__ = "0.1.0"

from .errors import KGraphError  # noqa: E402

__all__ = ["KGraphError", "__version__"]
