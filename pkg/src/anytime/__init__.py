"""Anytime-reliable Toeplitz codes over erasure channels and control over them."""

__version__ = "0.1.0"
