"""Decentralized expert-system toolkit for early-stage Alzheimer's prediction
from brain-connectivity graph features."""

__version__ = "0.1.0"
