"""Statevector QAOA and adaptive-bias QAOA for MaxCut on regular graphs."""

__version__ = "0.1.0"
