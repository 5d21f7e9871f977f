"""Physical-model MIMO channel estimation and its bias-variance tradeoff."""

__version__ = "0.1.0"
