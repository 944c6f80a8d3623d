"""Sketch-to-garment image translation with a small paired GAN."""

__version__ = "0.1.0"
