"""Finite-difference laboratory for the fast diffusion equation ``∂_t u^p = Δu``."""

__version__ = "0.1.0"
