"""Adaptive and conventional extended Kalman filters for dynamic state estimation."""

__version__ = "0.1.0"
