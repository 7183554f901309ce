"""Bayesian promotion time cure model for current status data"""

__version__ = "1.0.0"
