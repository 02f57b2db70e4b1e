"""Random discrete measures on R^d: samplers, cone calculus, diffusion and identity checks."""
from ._backend import NAME as backend
from .density import ExponentialFamily, gamma
from .measure import DiscreteMeasure, MarkedConfiguration, Window

__version__ = "0.1.0"

__all__ = ["DiscreteMeasure", "ExponentialFamily", "MarkedConfiguration", "Window", "backend", "gamma"]
