"""Syntactically controlled paraphrase generation at desk scale."""

__version__ = "0.1.0"
