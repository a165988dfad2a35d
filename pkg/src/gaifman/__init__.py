"""Relational learning from sampled, bounded-size neighborhoods of a knowledge base."""

__version__ = "0.1.0"
