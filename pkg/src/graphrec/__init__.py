"""Graph-of-thoughts reasoning engine for LLM-based sequential recommendation."""

__version__ = "0.1.0"
