"""Minimizing-movement (JKO) solver for degenerate convection-diffusion in 1D,
with a finite-volume reference solver and entropy-inequality checks."""

__version__ = "0.1.0"
