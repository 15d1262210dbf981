"""Contrastive transfer training over rumor propagation graphs."""

__version__ = "0.1.0"
