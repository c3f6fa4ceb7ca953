"""Helmholtz problems as sequences of Poisson solves, with stochastic convergence thresholds."""

__version__ = "0.1.0"
