"""Fairness-aware training, auditing, and mitigation for tabular classifiers."""

__version__ = "0.1.0"
