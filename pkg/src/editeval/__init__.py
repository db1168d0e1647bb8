"""Decode image-editing model outputs into dense predictions and score them."""

__version__ = "0.1.0"
