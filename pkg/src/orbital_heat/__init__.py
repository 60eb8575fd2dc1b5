"""Heat kernels and orbit counting for Kleinian groups, with graph models."""

__version__ = "0.1.0"
