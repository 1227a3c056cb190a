"""Sampling-based distinct value estimation and a Zipfian benchmark harness."""

__version__ = "0.1.0"
