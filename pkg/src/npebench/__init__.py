"""Amortized neural posterior estimation: simulators, decoders, calibration."""

__version__ = "0.1.0"
