"""Desk-scale verification of sampling reductions for one-way and state puzzles."""

__version__ = "0.1.0"
