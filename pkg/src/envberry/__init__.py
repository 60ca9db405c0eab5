"""Environment-induced Berry phases and non-adiabatic corrections for a two-level system."""

__version__ = "0.1.0"
