"""Quantum dynamics in extended phase space: damped charges in a uniform field."""

__version__ = "0.1.0"
