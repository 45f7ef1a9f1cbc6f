"""No-U-Turn and plain Hamiltonian Monte Carlo samplers.

The NUTS transition follows the multinomial variant: trajectories are built
by repeated doubling in a random direction, states are drawn with weights
``exp(-H)`` (uniform progressive sampling inside subtrees, biased towards the
new subtree at the top level), and doubling stops on a generalised U-turn,
checked across every merged subtree pair, or on a divergence. During warmup
the step size follows dual averaging and a diagonal inverse metric is
estimated in expanding windows.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np


class AdaptationError(RuntimeError):
    """Warmup failed (for example every transition diverged)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class NUTSConfig:
    chains: int = 4
    draws: int = 1000
    burn_in: int = 1000
    target_accept: float = 0.8
    max_depth: int = 10
    seed: int = 0
    adapt_metric: bool = True
    max_energy_error: float = 1000.0
    init_step_size: float = 1.0
    # plain HMC with fixed step size and number of steps
    algorithm: str = "nuts"
    hmc_steps: int = 10
    step_size: float | None = None

    def __post_init__(self):
        if self.chains < 1 or self.draws < 1 or self.burn_in < 0:
            raise ValueError("chains and draws must be positive, burn_in nonnegative")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.algorithm not in ("nuts", "hmc"):
            raise ValueError("algorithm must be 'nuts' or 'hmc'")

    @classmethod
    def from_dict(cls, d: dict) -> "NUTSConfig":
        return cls(**d)


def leapfrog(logp_grad, q, p, grad, eps, inv_metric):
    """One leapfrog step: half momentum kick, full drift, half kick."""
    p_half = p + 0.5 * eps * grad
    q_new = q + eps * inv_metric * p_half
    lp, g = logp_grad(q_new)
    p_new = p_half + 0.5 * eps * g
    return q_new, p_new, lp, g


def _kinetic(p, inv_metric):
    return 0.5 * float(np.dot(p, inv_metric * p))


@dataclass
class _Tree:
    q_left: np.ndarray
    p_left: np.ndarray
    g_left: np.ndarray
    q_right: np.ndarray
    p_right: np.ndarray
    g_right: np.ndarray
    q_prop: np.ndarray
    lp_prop: float
    g_prop: np.ndarray
    log_w: float
    rho: np.ndarray
    n_leapfrog: int = 0
    sum_accept: float = 0.0
    valid: bool = True
    divergent: bool = False


def _no_uturn(ps_left, ps_right, rho):
    return float(np.dot(ps_left, rho)) > 0 and float(np.dot(ps_right, rho)) > 0


class _Integrator:
    def __init__(self, logp_grad, inv_metric, max_energy_error):
        self.logp_grad = logp_grad
        self.inv_metric = inv_metric
        self.max_energy_error = max_energy_error

    def leaf(self, q, p, g, eps, H0):
        q1, p1, lp1, g1 = leapfrog(self.logp_grad, q, p, g, eps, self.inv_metric)
        H = -lp1 + _kinetic(p1, self.inv_metric) if np.isfinite(lp1) else np.inf
        if not np.isfinite(H):
            H = np.inf
        dH = H0 - H
        div = (H - H0) > self.max_energy_error
        acc = math.exp(min(dH, 0.0)) if np.isfinite(dH) else 0.0
        return _Tree(q1, p1, g1, q1, p1, g1, q1, lp1, g1, dH if np.isfinite(dH) else -np.inf, p1.copy(),
                     1, acc, not div, div)

    def build(self, q, p, g, direction, depth, eps, H0, rng) -> _Tree:
        if depth == 0:
            return self.leaf(q, p, g, direction * eps, H0)
        first = self.build(q, p, g, direction, depth - 1, eps, H0, rng)
        if not first.valid:
            return first
        if direction > 0:
            q2, p2, g2 = first.q_right, first.p_right, first.g_right
        else:
            q2, p2, g2 = first.q_left, first.p_left, first.g_left
        second = self.build(q2, p2, g2, direction, depth - 1, eps, H0, rng)
        nl = first.n_leapfrog + second.n_leapfrog
        sa = first.sum_accept + second.sum_accept
        if not second.valid:
            second.n_leapfrog, second.sum_accept = nl, sa
            return second
        log_w = np.logaddexp(first.log_w, second.log_w)
        # uniform progressive sampling inside a subtree
        if math.log(rng.uniform()) < second.log_w - log_w:
            prop = (second.q_prop, second.lp_prop, second.g_prop)
        else:
            prop = (first.q_prop, first.lp_prop, first.g_prop)
        left, right = (first, second) if direction > 0 else (second, first)
        return self._join(left, right, prop, log_w, nl, sa)

    def _join(self, left: _Tree, right: _Tree, prop, log_w, n_leapfrog, sum_accept) -> _Tree:
        im = self.inv_metric
        rho = left.rho + right.rho
        ok = _no_uturn(im * left.p_left, im * right.p_right, rho)
        # checks across the junction of the two subtrees
        ok = ok and _no_uturn(im * left.p_left, im * right.p_left, left.rho + right.p_left)
        ok = ok and _no_uturn(im * left.p_right, im * right.p_right, right.rho + left.p_right)
        return _Tree(left.q_left, left.p_left, left.g_left, right.q_right, right.p_right, right.g_right,
                     prop[0], prop[1], prop[2], log_w, rho, n_leapfrog, sum_accept, ok, False)


@dataclass
class TransitionStats:
    accept_stat: float
    tree_depth: int
    n_leapfrog: int
    divergent: bool
    energy: float


def nuts_transition(logp_grad, q0, lp0, g0, eps, inv_metric, rng, max_depth=10, max_energy_error=1000.0):
    """One multinomial NUTS transition.

    Returns ``(q, lp, grad, TransitionStats)``.
    """
    integ = _Integrator(logp_grad, inv_metric, max_energy_error)
    p0 = rng.standard_normal(q0.size) / np.sqrt(inv_metric)
    H0 = -lp0 + _kinetic(p0, inv_metric)
    tree = _Tree(q0, p0, g0, q0, p0, g0, q0, lp0, g0, 0.0, p0.copy())
    n_leapfrog, sum_accept = 0, 0.0
    depth = 0
    divergent = False
    q, lp, g = q0, lp0, g0
    while depth < max_depth:
        direction = 1 if rng.uniform() < 0.5 else -1
        if direction > 0:
            sub = integ.build(tree.q_right, tree.p_right, tree.g_right, 1, depth, eps, H0, rng)
        else:
            sub = integ.build(tree.q_left, tree.p_left, tree.g_left, -1, depth, eps, H0, rng)
        n_leapfrog += sub.n_leapfrog
        sum_accept += sub.sum_accept
        depth += 1
        if not sub.valid:
            divergent = sub.divergent
            break
        # biased progressive sampling towards the new subtree
        if math.log(rng.uniform()) < sub.log_w - tree.log_w:
            q, lp, g = sub.q_prop, sub.lp_prop, sub.g_prop
        log_w = np.logaddexp(tree.log_w, sub.log_w)
        left, right = (tree, sub) if direction > 0 else (sub, tree)
        tree = integ._join(left, right, (q, lp, g), log_w, 0, 0.0)
        if not tree.valid:
            break
    stats = TransitionStats(sum_accept / max(n_leapfrog, 1), depth, n_leapfrog, divergent,
                            -lp + _kinetic(p0, inv_metric))
    return q, lp, g, stats


def hmc_transition(logp_grad, q0, lp0, g0, eps, n_steps, inv_metric, rng):
    """Plain HMC with ``n_steps`` leapfrog steps and a Metropolis correction."""
    p0 = rng.standard_normal(q0.size) / np.sqrt(inv_metric)
    H0 = -lp0 + _kinetic(p0, inv_metric)
    q, p, lp, g = q0, p0, lp0, g0
    for _ in range(n_steps):
        q, p, lp, g = leapfrog(logp_grad, q, p, g, eps, inv_metric)
        if not np.isfinite(lp):
            break
    H1 = -lp + _kinetic(p, inv_metric) if np.isfinite(lp) else np.inf
    a = min(1.0, math.exp(min(H0 - H1, 0.0))) if np.isfinite(H1) else 0.0
    div = not np.isfinite(H1) or H1 - H0 > 1000.0
    if rng.uniform() < a:
        return q, lp, g, TransitionStats(a, 0, n_steps, div, H1)
    return q0, lp0, g0, TransitionStats(a, 0, n_steps, div, H0)


class DualAveraging:
    """Step-size adaptation towards a target mean acceptance statistic."""

    def __init__(self, delta=0.8, gamma=0.05, kappa=0.75, t0=10.0):
        self.delta, self.gamma, self.kappa, self.t0 = delta, gamma, kappa, t0
        self.restart(1.0)

    def restart(self, eps):
        self.mu = math.log(10.0 * eps)
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def update(self, accept_stat) -> float:
        self.counter += 1
        a = min(1.0, accept_stat)
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - a)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / self.gamma
        xe = self.counter ** (-self.kappa)
        self.x_bar = (1.0 - xe) * self.x_bar + xe * x
        return math.exp(x)

    def final(self) -> float:
        return math.exp(self.x_bar)


class WindowedVariance:
    """Diagonal metric estimation in expanding windows (75 / 25... / 50 by default)."""

    def __init__(self, n_warmup, dim, init_buffer=75, term_buffer=50, base_window=25):
        if init_buffer + term_buffer + base_window > n_warmup:
            init_buffer = int(0.15 * n_warmup)
            term_buffer = int(0.1 * n_warmup)
            base_window = n_warmup - init_buffer - term_buffer
        self.n_warmup = n_warmup
        self.init_buffer, self.term_buffer = init_buffer, term_buffer
        self.window = base_window
        self.counter = 0
        self.next_end = init_buffer + base_window - 1
        self.dim = dim
        self._reset()
        self.window_ends = []

    def _reset(self):
        self.n = 0
        self.mean = np.zeros(self.dim)
        self.m2 = np.zeros(self.dim)

    def _in_window(self):
        return self.init_buffer <= self.counter < self.n_warmup - self.term_buffer and self.counter != self.n_warmup

    def _window_end(self):
        return self.counter == self.next_end and self.counter != self.n_warmup

    def _advance(self):
        if self.next_end == self.n_warmup - self.term_buffer - 1:
            return
        self.window *= 2
        self.next_end = self.counter + self.window
        if self.next_end != self.n_warmup - self.term_buffer - 1:
            nxt = self.next_end + 2 * self.window
            if nxt >= self.n_warmup - self.term_buffer:
                self.next_end = self.n_warmup - self.term_buffer - 1

    def learn(self, q):
        """Add a draw; returns a new inverse metric at window ends, else ``None``."""
        out = None
        if self._in_window():
            self.n += 1
            d = q - self.mean
            self.mean += d / self.n
            self.m2 += d * (q - self.mean)
        if self._window_end():
            n = self.n
            var = self.m2 / max(n - 1, 1)
            out = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            self.window_ends.append(self.counter)
            self._advance()
            self._reset()
        self.counter += 1
        return out


def find_reasonable_step_size(logp_grad, q, lp, g, eps, inv_metric, rng):
    """Double or halve ``eps`` until one leapfrog step crosses 0.8 acceptance."""
    direction = 0
    for _ in range(100):
        p = rng.standard_normal(q.size) / np.sqrt(inv_metric)
        H0 = -lp + _kinetic(p, inv_metric)
        _, p1, lp1, _ = leapfrog(logp_grad, q, p, g, eps, inv_metric)
        H1 = -lp1 + _kinetic(p1, inv_metric) if np.isfinite(lp1) else np.inf
        dH = H0 - H1
        good = np.isfinite(dH) and dH > math.log(0.8)
        if direction == 0:
            direction = 1 if good else -1
        elif (direction == 1 and not good) or (direction == -1 and good):
            break
        eps = eps * 2.0 if direction == 1 else eps * 0.5
        if eps > 1e7 or eps < 1e-12:
            raise AdaptationError("step-size search failed: posterior is improper or the gradient is wrong")
    return eps


@dataclass
class ChainResult:
    draws: np.ndarray  # (draws, dim) unconstrained
    log_density: np.ndarray
    accept_stat: np.ndarray
    tree_depth: np.ndarray
    n_leapfrog: np.ndarray
    divergent: np.ndarray
    step_size: float
    inv_metric: np.ndarray
    warmup_divergences: int = 0
    warmup_draws: np.ndarray | None = field(default=None, repr=False)


def run_chain(logp_grad, z0, config: NUTSConfig, seed_seq, keep_warmup: bool = False) -> ChainResult:
    """Warm up and sample one chain from ``z0``."""
    rng = np.random.default_rng(seed_seq)
    q = np.asarray(z0, dtype=float).copy()
    dim = q.size
    lp, g = logp_grad(q)
    if not np.isfinite(lp):
        raise AdaptationError("log density is not finite at the initial point")
    inv_metric = np.ones(dim)
    W = config.burn_in
    if config.algorithm == "hmc":
        eps = config.step_size if config.step_size is not None else 0.1
        out = np.empty((config.draws, dim))
        stats = []
        for t in range(W + config.draws):
            q, lp, g, s = hmc_transition(logp_grad, q, lp, g, eps, config.hmc_steps, inv_metric, rng)
            if t >= W:
                out[t - W] = q
                stats.append((lp, s))
        return _collect(out, stats, eps, inv_metric, 0)

    eps = config.step_size or find_reasonable_step_size(logp_grad, q, lp, g, config.init_step_size, inv_metric, rng)
    da = DualAveraging(config.target_accept)
    da.restart(eps)
    wv = WindowedVariance(W, dim) if config.adapt_metric and W > 0 else None
    warm_div = 0
    warm = np.empty((W, dim)) if keep_warmup else None
    for t in range(W):
        q, lp, g, s = nuts_transition(logp_grad, q, lp, g, eps, inv_metric, rng, config.max_depth,
                                      config.max_energy_error)
        warm_div += s.divergent
        if keep_warmup:
            warm[t] = q
        eps = da.update(s.accept_stat)
        if wv is not None:
            new = wv.learn(q)
            if new is not None:
                inv_metric = new
                eps = find_reasonable_step_size(logp_grad, q, lp, g, eps, inv_metric, rng)
                da.restart(eps)
    if W > 0:
        if warm_div == W:
            raise AdaptationError("every warmup transition diverged", {"warmup_divergences": warm_div})
        eps = da.final()
    out = np.empty((config.draws, dim))
    stats = []
    for t in range(config.draws):
        q, lp, g, s = nuts_transition(logp_grad, q, lp, g, eps, inv_metric, rng, config.max_depth,
                                      config.max_energy_error)
        out[t] = q
        stats.append((lp, s))
    res = _collect(out, stats, eps, inv_metric, warm_div)
    res.warmup_draws = warm
    return res


def _collect(out, stats, eps, inv_metric, warm_div):
    return ChainResult(
        draws=out,
        log_density=np.array([lp for lp, _ in stats]),
        accept_stat=np.array([s.accept_stat for _, s in stats]),
        tree_depth=np.array([s.tree_depth for _, s in stats]),
        n_leapfrog=np.array([s.n_leapfrog for _, s in stats]),
        divergent=np.array([s.divergent for _, s in stats]),
        step_size=float(eps),
        inv_metric=np.array(inv_metric),
        warmup_divergences=int(warm_div),
    )


def _run_chain_star(args):
    return run_chain(*args)


def sample(logp_grad, initial_points, config: NUTSConfig, threads: int = 1) -> list[ChainResult]:
    """Run ``config.chains`` chains, one independent RNG stream each.

    ``initial_points`` is a sequence of unconstrained starting vectors.
    Results are ordered by chain index regardless of ``threads``.
    """
    if len(initial_points) != config.chains:
        raise ValueError("one initial point per chain is required")
    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)
    jobs = [(logp_grad, initial_points[c], config, seeds[c]) for c in range(config.chains)]
    if threads > 1 and config.chains > 1:
        with ProcessPoolExecutor(max_workers=min(threads, config.chains)) as ex:
            return list(ex.map(_run_chain_star, jobs))
    return [run_chain(*j) for j in jobs]
