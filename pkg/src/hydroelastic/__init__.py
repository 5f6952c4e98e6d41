"""Monolithic finite-element solver for floating beams on linear potential flow."""

__version__ = "0.1.0"
