"""Prediction sensitivity auditing for feedforward binary classifiers."""

__version__ = "0.1.0"
