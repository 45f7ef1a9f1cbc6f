"""Container for posterior draws and the driver that produces them."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import nuts
from .diagnostics import DegenerateChainError, effective_sample_size, rhat


def summarize_draws(x) -> dict:
    """Mean, s.d., coefficient of variation and 5/50/95 percentiles."""
    x = np.asarray(x, dtype=float)
    if x.size and np.ptp(x) == 0:  # exact for constant samples
        mean, sd = float(x.flat[0]), 0.0
    else:
        mean = float(np.mean(x))
        sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    p5, p50, p95 = (float(v) for v in np.percentile(x, [5, 50, 95]))
    return {"mean": mean, "sd": sd, "cov": sd / abs(mean) if mean != 0 else float("nan"),
            "p5": p5, "p50": p50, "p95": p95}


@dataclass
class PosteriorSamples:
    """Post-warmup draws in constrained space, shaped (chains, draws, dim)."""

    names: list[str]
    draws: np.ndarray
    accept_stat: np.ndarray
    divergent: np.ndarray
    tree_depth: np.ndarray
    n_leapfrog: np.ndarray
    log_density: np.ndarray
    step_size: np.ndarray
    inv_metric: np.ndarray
    warmup_divergences: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[1]

    def chains(self, name: str) -> np.ndarray:
        return self.draws[:, :, self.names.index(name)]

    def flat(self, name: str) -> np.ndarray:
        return self.chains(name).reshape(-1)

    def flat_draws(self) -> np.ndarray:
        """(chains * draws, dim), chain-major."""
        return self.draws.reshape(-1, self.draws.shape[2])

    def rhat(self) -> dict:
        out = {}
        for n in self.names:
            try:
                out[n] = rhat(self.chains(n))
            except (DegenerateChainError, ValueError):
                out[n] = float("nan")
        return out

    def ess(self) -> dict:
        out = {}
        for n in self.names:
            try:
                out[n] = effective_sample_size(self.chains(n))
            except DegenerateChainError:
                out[n] = float("nan")
        return out

    def converged(self, threshold: float = 1.1) -> bool:
        r = np.array(list(self.rhat().values()))
        return bool(np.all(np.isfinite(r)) and np.all(r < threshold))

    def summary(self) -> dict:
        return {n: summarize_draws(self.flat(n)) for n in self.names}

    def diagnostics(self) -> dict:
        return {
            "rhat": self.rhat(),
            "ess": self.ess(),
            "divergences": int(self.divergent.sum()),
            "divergences_per_chain": [int(v) for v in self.divergent.sum(axis=1)],
            "warmup_divergences": [int(v) for v in self.warmup_divergences],
            "step_size": [float(v) for v in self.step_size],
            "mean_accept_stat": [float(v) for v in self.accept_stat.mean(axis=1)],
            "mean_tree_depth": [float(v) for v in self.tree_depth.mean(axis=1)],
            "inv_metric": [[float(v) for v in row] for row in self.inv_metric],
            "metadata": self.metadata,
        }

    # -- files ---------------------------------------------------------------
    SAMPLER_COLUMNS = ("lp__", "accept_stat__", "divergent__", "treedepth__", "n_leapfrog__")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["chain", "draw"] + list(self.names) + list(self.SAMPLER_COLUMNS))
            for c in range(self.n_chains):
                for t in range(self.n_draws):
                    row = [c, t] + [repr(float(v)) for v in self.draws[c, t]]
                    row += [repr(float(self.log_density[c, t])), repr(float(self.accept_stat[c, t])),
                            int(self.divergent[c, t]), int(self.tree_depth[c, t]), int(self.n_leapfrog[c, t])]
                    w.writerow(row)

    @classmethod
    def from_csv(cls, path, diagnostics_path=None) -> "PosteriorSamples":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        header = rows[0]
        k = len(header) - 2 - len(cls.SAMPLER_COLUMNS)
        names = header[2 : 2 + k]
        data = np.array([[float(v) for v in r] for r in rows[1:]])
        chain = data[:, 0].astype(int)
        m = chain.max() + 1
        n = data.shape[0] // m
        arr = data.reshape(m, n, -1)
        diag = {}
        if diagnostics_path is not None:
            with open(diagnostics_path) as fh:
                diag = json.load(fh)
        return cls(
            names=names,
            draws=arr[:, :, 2 : 2 + k],
            log_density=arr[:, :, 2 + k],
            accept_stat=arr[:, :, 3 + k],
            divergent=arr[:, :, 4 + k].astype(bool),
            tree_depth=arr[:, :, 5 + k].astype(int),
            n_leapfrog=arr[:, :, 6 + k].astype(int),
            step_size=np.array(diag.get("step_size", [np.nan] * m)),
            inv_metric=np.array(diag.get("inv_metric", [[np.nan] * k] * m)),
            warmup_divergences=np.array(diag.get("warmup_divergences", [0] * m)),
            metadata=diag.get("metadata", {}),
        )


def sample_posterior(posterior, config: nuts.NUTSConfig, threads: int = 1, initial_points=None) -> PosteriorSamples:
    """Initialise and run every chain, then map draws to constrained space.

    Initial points come from ``posterior.initial_point`` with a generator
    derived from the configured seed, independent of the sampler streams.
    """
    if initial_points is None:
        init_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 7919]))
        initial_points = [posterior.initial_point(init_rng) for _ in range(config.chains)]
    results = nuts.sample(posterior, initial_points, config, threads=threads)
    draws = np.stack([np.array([posterior.to_constrained(z) for z in r.draws]) for r in results])
    return PosteriorSamples(
        names=list(posterior.names),
        draws=draws,
        accept_stat=np.stack([r.accept_stat for r in results]),
        divergent=np.stack([r.divergent for r in results]),
        tree_depth=np.stack([r.tree_depth for r in results]),
        n_leapfrog=np.stack([r.n_leapfrog for r in results]),
        log_density=np.stack([r.log_density for r in results]),
        step_size=np.array([r.step_size for r in results]),
        inv_metric=np.stack([r.inv_metric for r in results]),
        warmup_divergences=np.array([r.warmup_divergences for r in results]),
        metadata={"sampler": {k: v for k, v in vars(config).items()}},
    )
