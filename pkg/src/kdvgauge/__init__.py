"""Pseudo-spectral laboratory for gauge-transformed KdV-type equations."""

__version__ = "0.1.0"
