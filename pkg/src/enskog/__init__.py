"""Particle simulation and analysis toolkit for a mollified long-range
collision model: geometry of grazing deflections, singular angular kernel,
event-thinned N-particle dynamics, coupling/regularity diagnostics, and a CLI.
"""

from .backend import active_backend

__version__ = "0.1.0"

__all__ = ["active_backend", "__version__"]
