"""Fibrous-cap analysis for intravascular OCT pullbacks."""

__version__ = "0.1.0"
