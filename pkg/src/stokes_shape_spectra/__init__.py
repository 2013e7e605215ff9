"""Boundary-integral Stokes eigenvalue solver on perturbed 3D surfaces."""

__version__ = "0.1.0"
