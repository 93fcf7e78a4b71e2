"""Radial simulation and blow-up diagnostics for a quasilinear chemotaxis-May-Nowak model."""
__version__ = "0.1.0"
