"""Closed-loop two-driver merging harness with behavioral analysis."""

__version__ = "0.1.0"
