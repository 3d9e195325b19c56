"""Memory-augmented sequence-to-sequence toolkit for sentence simplification."""

__version__ = "0.1.0"
