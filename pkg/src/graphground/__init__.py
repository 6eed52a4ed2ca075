"""Neuro-symbolic 3D visual grounding by attention transfer over a
concept-embedded scene graph."""

__version__ = "0.1.0"
