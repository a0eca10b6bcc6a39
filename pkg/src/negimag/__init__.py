"""Numerical checks for negative-imaginary, counterclockwise and IQC properties
of linear and nonlinear systems, and for stability of their positive-feedback
interconnections."""

__version__ = "0.1.0"
