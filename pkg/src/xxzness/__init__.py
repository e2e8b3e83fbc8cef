"""Spin transport in XXZ chains driven by stochastic boundary baths."""

__version__ = "0.1.0"
