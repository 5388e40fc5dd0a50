"""Randomized smoothing with adversarial attacks and training, at desk scale."""

__version__ = "0.1.0"
