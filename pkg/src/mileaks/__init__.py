"""Membership inference against black-box classifiers: attacks, defenses, experiments."""

__version__ = "0.1.0"
