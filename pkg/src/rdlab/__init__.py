"""Numerical laboratory for porous-medium diffusion with weighted strong reaction."""
