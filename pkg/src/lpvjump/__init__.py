"""Dwell-time certificates and gain scheduling for LPV systems with jumps."""

__version__ = "0.1.0"
