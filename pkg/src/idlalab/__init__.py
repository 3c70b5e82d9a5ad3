"""Internal DLA fluctuation laboratory."""

__version__ = "0.1.0"
