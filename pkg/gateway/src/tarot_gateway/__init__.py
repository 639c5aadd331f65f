"""HTTP gateway exposing reasoner, segmenter, and feature-extractor roles
behind the tarot wire protocol."""

__version__ = "0.1.0"
