"""Gain, phase and input-delay margins of linear multi-agent consensus networks."""

__version__ = "0.1.0"
