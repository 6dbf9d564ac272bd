"""Charge-basis tomography simulator for superconducting circuits."""

__version__ = "0.1.0"
