"""Desk-scale kinetic transport lab.

Stationary states of transport-collision dynamics on a 1+1 dimensional
phase grid, their dissipation functionals, a weighted right inverse of
the space-time divergence, and constructive decay certificates.
"""

__version__ = "0.1.0"

from .grid import Grid, PhaseField, SpatialField  # noqa: F401
from .model import KineticModel  # noqa: F401
