"""PyRobustLasso - outlier-robust inference for high-dimensional linear models."""

__version__ = "0.1.0"
