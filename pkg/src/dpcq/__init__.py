"""Distributed Q-learning power control for cognitive femtocell networks."""

__version__ = "0.1.0"
