"""Capacity expansion and unit commitment for valuing the operating
flexibility of a gas plant with carbon capture."""

__version__ = "0.1.0"
