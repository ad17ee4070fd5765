"""Privacy-preserving medical insurance claim processing."""

__version__ = "0.1.0"
