"""Greedy-GQ with linear function approximation and exact MSPBE instrumentation."""

__version__ = "0.1.0"
