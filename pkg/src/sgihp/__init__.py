"""Five-stage harmonic / inverted-harmonic Stern-Gerlach protocol simulator."""

__version__ = "0.1.0"
