"""Desk-scale statistical laboratory for one-dimensional chains of weakly
anharmonic oscillators with conservative momentum-exchange noise."""

__version__ = "0.1.0"
