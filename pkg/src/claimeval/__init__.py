"""Claim- and citation-level factuality evaluation with LLM judges."""

__version__ = "0.1.0"
