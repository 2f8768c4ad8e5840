"""tirc: a small tensor-program compiler and embedded-style runtime."""

__version__ = "0.1.0"
