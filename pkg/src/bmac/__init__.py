"""Transmitter optimization for MIMO interference networks with arbitrary cancellation."""

__version__ = "0.1.0"
