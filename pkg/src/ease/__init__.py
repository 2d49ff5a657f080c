"""Extractive-abstractive summarization under an information-bottleneck budget."""

__version__ = "0.1.0"
