"""Rational approximation of the evolution operator of skew-Hermitian wave systems."""

__version__ = "0.1.0"
