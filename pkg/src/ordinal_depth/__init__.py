"""Ordinal depth estimation with semantic coupling, at desk scale."""

__version__ = "0.1.0"
