"""Graph-based dependency parsing with character, word, and morphological-oracle encoders."""

__version__ = "0.1.0"
