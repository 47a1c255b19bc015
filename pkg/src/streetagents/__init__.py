"""LLM-driven generative agents that walk a street-view graph, remember what they see, and rate scenes."""

__version__ = "0.1.0"
