"""Unsupervised end-to-end calibration of impaired ISAC arrays."""

__version__ = "0.1.0"
