"""Field rover simulation and yield evaluation toolkit."""

__version__ = "0.1.0"
