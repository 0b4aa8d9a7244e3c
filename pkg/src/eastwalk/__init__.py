"""Random walks on kinetically constrained and spin-flip environments."""

__version__ = "0.1.0"
