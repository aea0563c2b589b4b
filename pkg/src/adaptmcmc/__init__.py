"""Adaptive MCMC with stochastic-approximation tuning and reinitialization."""
__version__ = "0.1.0"
