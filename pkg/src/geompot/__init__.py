"""Geometry, brackets and quantization for a particle on a curved surface."""

__version__ = "0.1.0"
