"""Adversarial robustness toolkit for ML-based network intrusion detection."""

__version__ = "0.1.0"
