"""Fingerprint quality classes from multi-matcher score statistics.

The package derives per-imprint quality classes from genuine and impostor
similarity scores of several matchers, trains a small feed-forward network
to predict those classes from image features, and evaluates quality-driven
imprint selection with DET curves.
"""

__version__ = "0.1.0"
