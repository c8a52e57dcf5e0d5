"""Deterministic simulator for a checkpointed longest-chain protocol."""

__version__ = "0.1.0"
