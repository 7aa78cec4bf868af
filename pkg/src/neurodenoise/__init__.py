"""Spiking full-band/sub-band speech enhancement with gated spiking neurons."""

__version__ = "0.1.0"
