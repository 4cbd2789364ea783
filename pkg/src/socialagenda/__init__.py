"""Socially aware agenda assistant: predictive models, attribution, explanations."""

__version__ = "0.1.0"

DEFAULT_SEED = 2224
