"""Minimax causal filtering: capacity-achieving priors, Bayesian filters and
information-estimation checks for Gaussian and Poisson observation channels."""

__version__ = "0.1.0"
