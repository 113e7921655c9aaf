"""Leakage-resistant live forecasting benchmark platform."""

__version__ = "0.1.0"
