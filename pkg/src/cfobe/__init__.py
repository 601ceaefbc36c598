"""Uplink cell-free massive MIMO spectral-efficiency simulation with bilinear equalizers."""

__version__ = "0.1.0"
