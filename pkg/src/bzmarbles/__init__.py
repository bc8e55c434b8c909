"""Simulator of Belousov-Zhabotinsky liquid-marble arrays."""

__version__ = "0.1.0"
