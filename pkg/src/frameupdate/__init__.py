"""Mass-assumption-free Bayesian model updating of planar frames."""

__version__ = "0.1.0"
