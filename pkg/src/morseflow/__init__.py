"""Morse complexes of explicit Morse-Smale systems, gradient-flow chain maps,
induced maps on homology and cup products, verified by exact integer checks."""

__version__ = "0.1.0"
