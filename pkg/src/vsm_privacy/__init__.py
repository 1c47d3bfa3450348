"""Antenna-selection privacy for phased-array CW vital-sign radar."""

__version__ = "0.1.0"
