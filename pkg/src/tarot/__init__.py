"""Training-free referring-expression segmentation orchestrator."""

__version__ = "0.1.0"
