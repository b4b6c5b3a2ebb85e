"""Predictive representations for tabular reinforcement learning.

Successor representations and models, successor features with GPI,
SR-based exploration, Bayesian associative learners, the temporal context
model and predictive-map phenomenology, plus a batch experiment harness.
"""

__version__ = "0.1.0"
