"""Posterior-predictive peaks, densities and summary tables."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .bayes.samples import PosteriorSamples, summarize_draws
from .dynamics import IntegrationError, integrate, peak
from .frame_core import FrameError, FrameModel, assemble, solve_modal


class DegenerateDensityError(ValueError):
    """Kernel density requested for samples without spread."""


class UnconvergedPosteriorError(RuntimeError):
    pass


def ecdf(samples):
    """Sorted samples with plotting positions ``k / n`` (k = 1..n)."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    return x, np.arange(1, n + 1) / n


def ecdf_eval(samples, x):
    """Right-continuous empirical CDF at points ``x``."""
    s = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(s, np.asarray(x, dtype=float), side="right") / s.size


def kde(samples, bandwidth="silverman", n_points: int = 512, grid=None, pad: float = 5.0):
    """Gaussian kernel density of a 1-D sample.

    The default grid spans the sample range widened by ``pad`` bandwidths,
    so the density integrates to one up to a negligible tail mass.

    Returns
    -------
    grid, density : ndarray
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2 or np.ptp(x) == 0:
        raise DegenerateDensityError("kernel density needs at least two distinct samples")
    k = stats.gaussian_kde(x, bw_method=bandwidth)
    h = float(np.sqrt(k.covariance[0, 0]))
    if grid is None:
        grid = np.linspace(x.min() - pad * h, x.max() + pad * h, n_points)
    grid = np.asarray(grid, dtype=float)
    # direct sum; keeps symmetric samples symmetric to rounding
    z = (grid[:, None] - x[None, :]) / h
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (x.size * h * math.sqrt(2 * math.pi))
    return grid, dens


@dataclass
class PredictiveResult:
    """Predictive distribution of one quantity of interest."""

    name: str
    samples: np.ndarray
    cdf_x: np.ndarray = field(init=False)
    cdf_p: np.ndarray = field(init=False)
    grid: np.ndarray | None = None
    density: np.ndarray | None = None
    summary: dict = field(init=False)
    n_failed: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.cdf_x, self.cdf_p = ecdf(self.samples)
        self.summary = summarize_draws(self.samples)

    def add_density(self, n_points=512):
        try:
            self.grid, self.density = kde(self.samples, n_points=n_points)
        except DegenerateDensityError:
            self.grid = self.density = None
        return self

    def percentile(self, q) -> float:
        return float(np.percentile(self.samples, q))

    def brackets(self, value, lo=5, hi=95) -> bool:
        return self.percentile(lo) <= value <= self.percentile(hi)

    def to_rows(self):
        """(value, k/n, k/(n+1)) rows of the empirical CDF."""
        n = self.cdf_x.size
        k = np.arange(1, n + 1)
        return [(float(v), float(a), float(b)) for v, a, b in zip(self.cdf_x, k / n, k / (n + 1))]


def thinned_draws(samples: PosteriorSamples, thinning: int) -> np.ndarray:
    """Every ``thinning``-th pooled draw, chains concatenated in index order."""
    if thinning < 1:
        raise ValueError("thinning must be >= 1")
    return samples.flat_draws()[thinning - 1 :: thinning]


def _split(model: FrameModel, names, x):
    n_mass = sum(p.kind == "mass" for p in model.parameters)
    n_stiff = len(model.parameters) - n_mass
    x = np.asarray(x, dtype=float)
    return x[n_mass : n_mass + n_stiff], x[:n_mass]


def predict_peaks(model: FrameModel, draws, ground_accel, dt, qoi, damping_ratio=0.02, substeps=10,
                  method="newmark", names=None) -> dict[str, PredictiveResult]:
    """Peak absolute response of each quantity for every parameter draw.

    Parameters
    ----------
    draws : (n, dim) array
        Constrained draws ordered as masses, stiffness parameters, then any
        trailing error scales (ignored).
    ground_accel : array
        Excitation, as accepted by :func:`integrate`.
    qoi : sequence of str
        Channel names (accelerations or observed moments).
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    peaks = {q: [] for q in qoi}
    failed = 0
    for x in draws:
        tk, tm = _split(model, names, x)
        try:
            res = integrate(model, tk, tm, damping_ratio, ground_accel, dt, substeps=substeps, method=method)
            vals = {q: peak(res.channel(q)) for q in qoi}
        except (IntegrationError, FrameError, np.linalg.LinAlgError, FloatingPointError):
            failed += 1
            continue
        if not all(np.isfinite(v) for v in vals.values()):
            failed += 1
            continue
        for q in qoi:
            peaks[q].append(vals[q])
    if failed:
        warnings.warn(f"{failed} of {len(draws)} draws failed and were skipped", RuntimeWarning, stacklevel=2)
    if failed == len(draws):
        raise IntegrationError("every posterior draw failed to integrate")
    return {q: PredictiveResult(q, np.array(peaks[q]), n_failed=failed) for q in qoi}


def predict_modal(model: FrameModel, draws, n_modes=2) -> dict[str, PredictiveResult]:
    """Natural frequencies (Hz) and unit-MD-normalised bending-moment shapes per draw."""
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    out: dict[str, list] = {}
    labels = model.observed_labels()
    for x in draws:
        tk, tm = _split(model, None, x)
        mats = assemble(model, tk, tm)
        w, phi = solve_modal(mats.K_red, mats.mass_red, n_modes)
        for k in range(n_modes):
            d = phi[:, k] / np.linalg.norm(phi[:, k])
            r = mats.S @ d
            j = int(np.argmax(np.abs(r)))
            if r[j] < 0:
                r = -r
            out.setdefault(f"f{k + 1}", []).append(w[k] / (2 * np.pi))
            for lab, v in zip(labels, r):
                out.setdefault(f"mode{k + 1}_{lab}", []).append(v)
    return {k: PredictiveResult(k, np.array(v)) for k, v in out.items()}


def check_converged(samples: PosteriorSamples, threshold=1.1, allow_unconverged=False):
    bad = {k: v for k, v in samples.rhat().items() if not v < threshold}
    if bad and not allow_unconverged:
        raise UnconvergedPosteriorError(f"R-hat >= {threshold}: " + ", ".join(f"{k}={v:.3g}" for k, v in bad.items()))
    return bad


# ---------------------------------------------------------------------------
# tables


def summarize(samples: PosteriorSamples) -> dict:
    return samples.summary()


def cross_run_summary(runs: list[dict]) -> dict:
    """Mean and CoV over runs of each parameter's posterior mean."""
    if not runs:
        raise ValueError("no runs")
    out = {}
    for name in runs[0]:
        means = np.array([r[name]["mean"] for r in runs])
        mu = float(means.mean())
        sd = float(means.std(ddof=1)) if means.size > 1 else 0.0
        out[name] = {"mean": mu, "cov": sd / abs(mu) if mu else float("nan"), "n_runs": int(means.size)}
    return out


def _fmt(v):
    if not np.isfinite(v):
        return "nan"
    a = abs(v)
    return f"{v:.4g}" if 1e-3 <= a < 1e5 or a == 0 else f"{v:.3e}"


def markdown_table(summaries: dict, targets: dict | None = None, title: str | None = None) -> str:
    """Per-parameter table of mean, CoV and 5/50/95 percentiles."""
    lines = []
    if title:
        lines += [f"### {title}", ""]
    head = ["parameter"] + (["target"] if targets else []) + ["mean", "CoV", "5%", "50%", "95%"]
    lines.append("| " + " | ".join(head) + " |")
    lines.append("|" + "---|" * len(head))
    for name, s in summaries.items():
        row = [name]
        if targets:
            row.append(_fmt(targets[name]) if name in targets else "")
        row += [_fmt(s["mean"]), _fmt(s["cov"]), _fmt(s["p5"]), _fmt(s["p50"]), _fmt(s["p95"])]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def cross_run_table(cross: dict, targets: dict | None = None) -> str:
    head = ["parameter"] + (["target"] if targets else []) + ["mean of means", "CoV of means", "runs"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for name, s in cross.items():
        row = [name] + ([_fmt(targets[name]) if name in targets else ""] if targets else [])
        row += [_fmt(s["mean"]), _fmt(s["cov"]), str(s["n_runs"])]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"
