"""Copyrighted cloud media sharing with proxy re-encryption and LUT fingerprints."""

__version__ = "0.1.0"
