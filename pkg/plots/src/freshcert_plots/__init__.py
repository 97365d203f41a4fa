"""Static figure renderers for freshcert CLI outputs."""

__version__ = "0.1.0"

from . import render, schemas

__all__ = ["render", "schemas"]
