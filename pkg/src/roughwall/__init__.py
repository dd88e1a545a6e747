"""Rough-wall channel flow: boundary layers, wall laws and convergence studies."""

__version__ = "0.1.0"
