"""Discrete-event simulator for interest-centric vehicular networking protocols."""

__version__ = "0.1.0"
