"""Simulation benchmark for measuring preference manipulation by ranking policies."""

__version__ = "0.1.0"
