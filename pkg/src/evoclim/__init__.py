"""Fit, emulate and apply changes in temporal covariance of gridded daily temperatures."""
__version__ = "0.1.0"
