"""Exact two-party simulator for nonlocal-gate protocols with resource ledgers."""

__version__ = "0.1.0"
