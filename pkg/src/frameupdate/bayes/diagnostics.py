"""Convergence diagnostics for multi-chain MCMC output."""
from __future__ import annotations

import numpy as np


class DegenerateChainError(ValueError):
    pass


def split_chains(chains) -> np.ndarray:
    """Split each chain of an (m, n) array into halves, giving (2m, n // 2)."""
    x = np.asarray(chains, dtype=float)
    n = x.shape[1] // 2
    return np.concatenate([x[:, :n], x[:, x.shape[1] - n :]], axis=0)


def rhat(chains, split: bool = True) -> float:
    """Potential scale reduction factor of one parameter.

    Parameters
    ----------
    chains : (m, n) array
        ``m >= 2`` chains of equal length ``n >= 10``.
    split : bool
        Split every chain in half first (split-R-hat).

    Computed as ``sqrt(1 + B / (n W))`` with ``B / n`` the variance of the
    chain means and ``W`` the mean within-chain variance, so the value is at
    least one and equals one exactly when all chain means coincide.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("at least two chains are required")
    if x.shape[1] < 10:
        raise ValueError("chains must have at least 10 draws")
    if split:
        x = split_chains(x)
    W = float(np.mean(np.var(x, axis=1, ddof=1)))
    if not W > 0:
        raise DegenerateChainError("zero within-chain variance")
    B_over_n = float(np.var(np.mean(x, axis=1), ddof=1))
    return float(np.sqrt(1.0 + B_over_n / W))


def autocorrelation(x) -> np.ndarray:
    """Normalised autocorrelation of a 1-D series via FFT."""
    x = np.asarray(x, dtype=float) - np.mean(x)
    n = x.size
    f = np.fft.rfft(x, 2 * n)
    ac = np.fft.irfft(f * np.conj(f))[:n]
    return ac / ac[0] if ac[0] > 0 else ac


def effective_sample_size(chains) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence truncation."""
    x = np.asarray(chains, dtype=float)
    m, n = x.shape
    acov = np.array([autocorrelation(c) * np.var(c) for c in x])
    W = np.mean(np.var(x, axis=1, ddof=1))
    var_plus = W * (n - 1) / n + (np.var(x.mean(axis=1), ddof=1) if m > 1 else 0.0)
    if not var_plus > 0:
        raise DegenerateChainError("zero variance")
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # sum of adjacent pairs while positive, made monotone
    pairs = rho[:-1:2] + rho[1::2]
    tau = -1.0
    prev = np.inf
    for p in pairs:
        if p <= 0:
            break
        p = min(p, prev)
        tau += 2.0 * p
        prev = p
    return float(m * n / max(tau, 1.0 / np.log10(m * n)))
