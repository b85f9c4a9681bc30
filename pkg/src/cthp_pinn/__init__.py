"""Identify constant time-headway ACC parameters with physics-inspired networks."""

__version__ = "0.1.0"
