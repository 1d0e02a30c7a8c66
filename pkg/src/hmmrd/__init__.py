"""Hybrid mimetic mixed gradient schemes for reaction-diffusion systems."""

__version__ = "0.1.0"
