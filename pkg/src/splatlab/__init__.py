"""Desk-scale differentiable Gaussian splatting with scale-invariant depth supervision."""

__version__ = "0.1.0"
