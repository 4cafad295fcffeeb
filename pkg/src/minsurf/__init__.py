"""Numerical workbench for the 2-D minimal surface system."""

from .backend import KERNEL_BACKEND

__all__ = ["KERNEL_BACKEND"]
__version__ = "0.1.0"
