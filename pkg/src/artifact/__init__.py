"""Correlated AI signals, performative feedback and cognitive dependency in a simulated market."""

__version__ = "0.1.0"
