"""Adversarial attacks, attribute embeddings and robustness analysis at desk scale."""

__version__ = "0.1.0"
