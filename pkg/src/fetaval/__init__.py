"""Evaluation and ranking for multi-class 3D segmentation challenges."""

__version__ = "0.1.0"
