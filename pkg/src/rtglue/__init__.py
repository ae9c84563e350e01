"""Spectral determinants, gluing and refined torsion on cylinder and product models."""

__version__ = "0.1.0"
