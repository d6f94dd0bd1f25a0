"""irkit: insulin-resistance indices, tabular model zoo, explanations, serving."""

__version__ = "0.1.0"
