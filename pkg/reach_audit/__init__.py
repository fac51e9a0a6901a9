"""Reachability audits for top-N linear-preference recommenders."""

__version__ = "0.1.0"
