"""Spectral asymptotics of first-order matrix operators on tori."""

__version__ = "0.1.0"
