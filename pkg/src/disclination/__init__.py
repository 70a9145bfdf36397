"""Energy evaluation, minimization and curvature diagnostics for a thin sheet with one disclination."""

from ._version import __version__
from .geometry import Model, Params

__all__ = ["__version__", "Model", "Params"]
