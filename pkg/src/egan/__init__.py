"""Unified conditional image generation and attribute editing with latent inversion."""

__version__ = "0.1.0"
