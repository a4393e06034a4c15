"""Soft-labeled contrastive pre-training for code representations at desk scale."""

__version__ = "0.1.0"
