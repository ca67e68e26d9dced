"""Toolkit for mining bug-report discussions into solution-description
examples, filtering them, and evaluating when-to-generate and what-to-generate
baselines."""

__version__ = "0.1.0"
