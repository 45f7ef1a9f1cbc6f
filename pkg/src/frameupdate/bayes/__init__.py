"""Posterior evaluation and Hamiltonian Monte Carlo sampling."""
from .diagnostics import DegenerateChainError, effective_sample_size, rhat
from .nuts import AdaptationError, NUTSConfig, leapfrog, sample
from .posterior import ModalPosterior, PosteriorEvaluationError, Priors, true_dataset
from .samples import PosteriorSamples, sample_posterior, summarize_draws

__all__ = [
    "AdaptationError",
    "DegenerateChainError",
    "ModalPosterior",
    "NUTSConfig",
    "PosteriorEvaluationError",
    "PosteriorSamples",
    "Priors",
    "effective_sample_size",
    "leapfrog",
    "rhat",
    "sample",
    "sample_posterior",
    "summarize_draws",
    "true_dataset",
]
