"""Posterior of (masses, stiffness parameters, error scales) given MD/MSR data.

The log density combines a modal-analysis term (frequencies and modal
displacements) with a static-analysis term that compares observed modal
stress resultants against ``S(theta_K) d_hat``; the latter carries no mass
information, which is what removes the need for a mass assumption.

Gradients are computed by an adjoint pass: the sensitivities of the
log-likelihood to the reduced stiffness, the lumped mass and the MSR map are
accumulated first and then contracted with each element's basic-stiffness
derivative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack
from scipy.optimize import linear_sum_assignment

from ..frame_core import FrameModel
from ..sysid import ModalDataset

LOG_2PI = math.log(2.0 * math.pi)
SIGMA_NAMES = ("sigma_omega", "sigma_d", "sigma_r")


@dataclass(frozen=True)
class Priors:
    """Uniform priors on structural parameters, half-normal on error scales.

    ``bounds`` maps parameter names to ``(lower, upper)``.
    """

    bounds: dict
    s_omega: float = 0.4 * math.pi
    s_d: float = 0.05
    s_r: float = 5.0e4

    def __post_init__(self):
        for name, (lo, hi) in self.bounds.items():
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"prior bounds for {name} must be finite and ordered")
        for s in (self.s_omega, self.s_d, self.s_r):
            if not s > 0:
                raise ValueError("half-normal scales must be positive")

    @classmethod
    def from_model(cls, model: FrameModel, **scales) -> "Priors":
        return cls({p.name: (p.lower, p.upper) for p in model.parameters}, **scales)

    def scale(self, sigma_name: str) -> float:
        return {"sigma_omega": self.s_omega, "sigma_d": self.s_d, "sigma_r": self.s_r}[sigma_name]


class _FrameKernel:
    """Vectorised stiffness, reduction and parameter sensitivities."""

    def __init__(self, model: FrameModel):
        self.model = model
        ne = len(model.elements)
        self.ne = ne
        self.nm = model.n_master
        self.H = np.ascontiguousarray(model.H)
        self.HT = np.ascontiguousarray(model.H.T)
        self.B = np.array(model.B)
        L = np.array(model._lengths)
        self.axial = np.array([e.E * e.A for e in model.elements]) / L
        self.flex = np.array([e.E * e.I for e in model.elements]) / L
        fc = np.ones((ne, 2))
        fi = -np.ones((ne, 2), dtype=int)
        for e_idx, refs in enumerate(model._fix_refs):
            for end, (const, idx) in enumerate(refs):
                if idx is None:
                    fc[e_idx, end] = const
                else:
                    fi[e_idx, end] = idx
        self.fix_const, self.fix_idx = fc, fi
        self.fix_mask = fi >= 0
        self.scale_idx = np.array([-1 if r is None else r for r in model._scale_refs], dtype=int)
        self.scale_mask = self.scale_idx >= 0
        self.n_k = len(model.stiffness_params)
        self.base_mass = np.array(model.base_mass[: self.nm])
        self.patterns = np.array(model.mass_patterns[:, : self.nm])
        e3 = 3 * np.arange(ne)
        # flat indices of the (0,0), (1,1), (2,2), (1,2), (2,1) entries of every block in Km
        n3 = 3 * ne
        self._i00 = e3 * n3 + e3
        self._i11 = (e3 + 1) * n3 + e3 + 1
        self._i22 = (e3 + 2) * n3 + e3 + 2
        self._i12 = (e3 + 1) * n3 + e3 + 2
        self._i21 = (e3 + 2) * n3 + e3 + 1
        # contributions to theta_K gradients from each end and from scale factors
        self._gi_idx = np.concatenate([fi[:, 0][self.fix_mask[:, 0]], fi[:, 1][self.fix_mask[:, 1]],
                                       self.scale_idx[self.scale_mask]])

    def fixities(self, tk):
        g = self.fix_const.copy()
        if tk.size:
            g[self.fix_mask] = tk[self.fix_idx[self.fix_mask]]
        return g

    def km(self, theta_K):
        """Unassembled stiffness and the per-element quantities for derivatives."""
        tk = np.asarray(theta_K, dtype=float)
        g = self.fixities(tk)
        gi, gj = g[:, 0], g[:, 1]
        c = self.flex.copy()
        if self.scale_mask.any():
            c[self.scale_mask] *= 10.0 ** tk[self.scale_idx[self.scale_mask]]
        den = 4.0 - gi * gj
        cd = 6.0 * c / den
        n3 = 3 * self.ne
        Km = np.zeros(n3 * n3)
        Km[self._i00] = self.axial
        Km[self._i11] = 2.0 * cd * gi
        Km[self._i22] = 2.0 * cd * gj
        Km[self._i12] = Km[self._i21] = cd * gi * gj
        return Km.reshape(n3, n3), (gi, gj, c, den)

    def grad_theta_K(self, Wm, aux):
        """Gradient w.r.t. theta_K of ``<Km, Wm>`` for an adjoint matrix ``Wm``."""
        gi, gj, c, den = aux
        w = Wm.reshape(-1)
        w11, w22 = w[self._i11], w[self._i22]
        w12 = w[self._i12] + w[self._i21]
        f = 12.0 * c / den**2
        ci = f * (4.0 * w11 + gj**2 * w22 + 2.0 * gj * w12)
        cj = f * (4.0 * w22 + gi**2 * w11 + 2.0 * gi * w12)
        parts = [ci[self.fix_mask[:, 0]], cj[self.fix_mask[:, 1]]]
        if self.scale_mask.any():
            cd = 6.0 * c / den
            cs = math.log(10.0) * cd * (2.0 * gi * w11 + 2.0 * gj * w22 + gi * gj * w12)
            parts.append(cs[self.scale_mask])
        return np.bincount(self._gi_idx, weights=np.concatenate(parts), minlength=self.n_k)


@dataclass
class Evaluation:
    """Simulated quantities at one parameter point, paired with the data."""

    omega: np.ndarray  # paired simulated frequencies
    d_hat: np.ndarray  # (n_obs, K) unit-norm, sign aligned
    r_hat: np.ndarray  # (m_obs, K)
    pairing: np.ndarray
    all_omega: np.ndarray
    log_lik_modal: float
    log_lik_static: float
    extras: dict = field(default_factory=dict)


class PosteriorEvaluationError(RuntimeError):
    pass


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class ModalPosterior:
    """Log posterior in unconstrained coordinates.

    Parameter order is masses, stiffness parameters, then ``sigma_omega``,
    ``sigma_d`` and ``sigma_r``. Bounded structural parameters use a scaled
    logit transform, the error scales a log transform.

    Parameters
    ----------
    model : FrameModel
    dataset : ModalDataset
        Its ``md_labels`` must be the model's master DOF labels and its
        ``msr_labels`` the observed components (any order).
    priors : Priors, optional
    use_modal, use_static : bool
        Switch the two likelihood terms; with both off only the prior remains.
    """

    def __init__(self, model: FrameModel, dataset: ModalDataset | None, priors: Priors | None = None,
                 use_modal: bool = True, use_static: bool = True):
        self.model = model
        self.priors = priors or Priors.from_model(model)
        self.use_modal = use_modal
        self.use_static = use_static
        self.kernel = _FrameKernel(model)
        self.mass_names = [p.name for p in model.mass_params]
        self.stiff_names = [p.name for p in model.stiffness_params]
        self.names = self.mass_names + self.stiff_names + list(SIGMA_NAMES)
        self.n_mass, self.n_stiff = len(self.mass_names), len(self.stiff_names)
        self.dim = len(self.names)
        lo, hi = [], []
        for n in self.mass_names + self.stiff_names:
            if n not in self.priors.bounds:
                raise ValueError(f"no prior bounds for {n}")
            a, b = self.priors.bounds[n]
            lo.append(a)
            hi.append(b)
        self.lower = np.array(lo)
        self.upper = np.array(hi)
        self.n_bounded = len(lo)
        self.width = self.upper - self.lower
        self._eye = np.eye(model.n_master)
        self.half_normal_scales = np.array([self.priors.scale(n) for n in SIGMA_NAMES])
        self._log_prior_const = float(-np.log(self.width).sum()
                                      + np.sum(0.5 * np.log(2.0 / np.pi) - np.log(self.half_normal_scales)))
        self.dataset = dataset
        if dataset is not None:
            self._bind_dataset(dataset)

    # -- data -----------------------------------------------------------------
    def _bind_dataset(self, ds: ModalDataset):
        labels = self.model.master_labels()
        if sorted(ds.md_labels) != sorted(labels):
            raise ValueError(f"dataset MD labels {ds.md_labels} do not match master DOFs {labels}")
        order = [ds.md_labels.index(l) for l in labels]
        self.d_bar = ds.D[order]
        obs = self.model.observed_labels()
        if ds.msr_labels:
            missing = set(ds.msr_labels) - set(obs)
            if missing:
                raise ValueError(f"dataset MSR labels {sorted(missing)} are not observed components")
            rows = [obs.index(l) for l in ds.msr_labels]
            self.r_bar = ds.R
        else:
            rows = []
            self.r_bar = np.zeros((0, len(ds.modes)))
        self.msr_rows = np.array(rows, dtype=int)
        self.S_rows = self.kernel.B[self.msr_rows] if rows else np.zeros((0, self.kernel.B.shape[1]))
        self.omega_bar = ds.omega
        self.n_modes = len(ds.modes)
        norms = np.linalg.norm(self.d_bar, axis=0)
        self.d_bar_unit = self.d_bar / norms

    # -- transforms -------------------------------------------------------------
    def to_constrained(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        x = np.empty_like(z)
        nb = self.n_bounded
        x[:nb] = self.lower + (self.upper - self.lower) * _sigmoid(z[:nb])
        with np.errstate(over="ignore"):
            x[nb:] = np.exp(z[nb:])
        return x

    def to_unconstrained(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = np.empty_like(x)
        nb = self.n_bounded
        u = (x[:nb] - self.lower) / (self.upper - self.lower)
        with np.errstate(divide="ignore"):
            z[:nb] = np.log(u) - np.log1p(-u)
            z[nb:] = np.log(x[nb:])
        return z

    def split(self, x):
        """``(theta_M, theta_K, sigmas)`` from a constrained vector."""
        nm, nk = self.n_mass, self.n_stiff
        return x[:nm], x[nm : nm + nk], x[nm + nk :]

    def _log_jacobian(self, z):
        nb = self.n_bounded
        zb = z[:nb]
        s = _sigmoid(zb)
        # log s + log(1 - s) computed stably
        lj_b = np.log(self.upper - self.lower) - np.logaddexp(0.0, -zb) - np.logaddexp(0.0, zb)
        return float(lj_b.sum() + z[nb:].sum()), np.concatenate([1.0 - 2.0 * s, np.ones(self.dim - nb)])

    def log_prior(self, x) -> float:
        """Log prior density of a constrained point (uniform plus half-normal)."""
        nb = self.n_bounded
        xb, sig = x[:nb], x[nb:]
        if np.any(xb < self.lower) or np.any(xb > self.upper) or np.any(sig < 0):
            return -np.inf
        lp = -np.log(self.upper - self.lower).sum()
        s = self.half_normal_scales
        lp += np.sum(0.5 * np.log(2.0 / np.pi) - np.log(s) - 0.5 * (sig / s) ** 2)
        return float(lp)

    # -- likelihood pieces --------------------------------------------------------
    def log_likelihood_modal(self, omega_hat, d_hat, sigma_omega, sigma_d) -> float:
        """Gaussian frequency and MD misfit including the normalising constants."""
        ew = self.omega_bar - omega_hat
        ed = self.d_bar - d_hat
        K = self.n_modes
        N = self.d_bar.shape[0]
        return float(
            -0.5 * np.sum(ew**2) / sigma_omega**2 - K * (math.log(sigma_omega) + 0.5 * LOG_2PI)
            - 0.5 * np.sum(ed**2) / sigma_d**2 - K * N * (math.log(sigma_d) + 0.5 * LOG_2PI)
        )

    def log_likelihood_static(self, r_hat, sigma_r) -> float:
        """Gaussian MSR misfit; ``r_hat`` is computed from the simulated MD."""
        er = self.r_bar - r_hat
        n = er.size
        return float(-0.5 * np.sum(er**2) / sigma_r**2 - n * (math.log(sigma_r) + 0.5 * LOG_2PI))

    def static_map(self, theta_K) -> np.ndarray:
        """``S = B Km H^T Gamma`` restricted to the dataset's MSR components."""
        Km, _ = self.kernel.km(theta_K)
        H = self.kernel.H
        K = H @ Km @ H.T
        nm = self.kernel.nm
        X = np.linalg.solve(K[nm:, nm:], K[nm:, :nm])
        Gamma = np.vstack([np.eye(nm), -X])
        return self.S_rows @ Km @ H.T @ Gamma

    # -- core evaluation -----------------------------------------------------------
    def _forward(self, theta_M, theta_K):
        kern = self.kernel
        Km, aux = kern.km(theta_K)
        K = kern.H @ Km @ kern.HT
        nm = kern.nm
        Kss = K[nm:, nm:]
        chol, info = lapack.dpotrf(Kss, lower=1)
        if info != 0:
            raise PosteriorEvaluationError("slave stiffness not positive definite")
        X, info = lapack.dpotrs(chol, K[nm:, :nm], lower=1)
        Gamma = np.empty((K.shape[0], nm))
        Gamma[:nm] = self._eye
        Gamma[nm:] = -X
        Kr = K[:nm, :nm] - K[:nm, nm:] @ X
        mass = kern.base_mass + theta_M @ kern.patterns
        if mass.min() <= 0:
            raise PosteriorEvaluationError("nonpositive lumped mass")
        w = 1.0 / np.sqrt(mass)
        A = Kr * np.outer(w, w)
        lam, psi, info = lapack.dsyevd(0.5 * (A + A.T))
        if info != 0 or not lam[0] > 0:
            raise PosteriorEvaluationError("reduced stiffness not positive definite")
        Phi = w[:, None] * psi  # mass normalised
        nrm = np.sqrt((Phi * Phi).sum(axis=0))
        U = Phi / nrm
        om_all = np.sqrt(lam)
        # pair simulated modes with observed ones by MAC, ties by frequency
        macs = (self.d_bar_unit.T @ U) ** 2
        pair = macs.argmax(axis=1)
        if len(set(pair.tolist())) < pair.size:
            cost = -macs + 1e-9 * np.abs(om_all[None, :] / self.omega_bar[:, None] - 1.0)
            pair = linear_sum_assignment(cost)[1]
        Up = U[:, pair]
        sgn = np.where((self.d_bar * Up).sum(axis=0) < 0, -1.0, 1.0)
        d_hat = Up * sgn
        om = om_all[pair]
        BKH = self.S_rows @ Km @ kern.HT  # (m, N)
        S = BKH @ Gamma
        r_hat = S @ d_hat
        return dict(aux=aux, Km=Km, chol=chol, Gamma=Gamma, lam=lam, Phi=Phi, nrm=nrm, pair=pair, sgn=sgn,
                    d_hat=d_hat, om=om, om_all=om_all, BKH=BKH, S=S, r_hat=r_hat)

    def evaluate(self, x) -> Evaluation:
        """Simulated paired modes and both log-likelihoods at constrained ``x``."""
        tm, tk, sig = self.split(np.asarray(x, dtype=float))
        f = self._forward(tm, tk)
        lm = self.log_likelihood_modal(f["om"], f["d_hat"], sig[0], sig[1])
        ls = self.log_likelihood_static(f["r_hat"], sig[2])
        return Evaluation(f["om"], f["d_hat"], f["r_hat"], f["pair"], f["om_all"], lm, ls, {"S": f["S"]})

    def log_density_constrained(self, x) -> float:
        """Log posterior (no Jacobian) at a constrained point."""
        x = np.asarray(x, dtype=float)
        lp = self.log_prior(x)
        if not np.isfinite(lp):
            return -np.inf
        if not (self.use_modal or self.use_static):
            return lp
        try:
            ev = self.evaluate(x)
        except (PosteriorEvaluationError, np.linalg.LinAlgError):
            return -np.inf
        return lp + (ev.log_lik_modal if self.use_modal else 0.0) + (ev.log_lik_static if self.use_static else 0.0)

    def log_density(self, z) -> float:
        z = np.asarray(z, dtype=float)
        x = self.to_constrained(z)
        nb = self.n_bounded
        if not (np.all(x[:nb] > self.lower) and np.all(x[:nb] < self.upper) and np.all(x[nb:] > 0)):
            return -np.inf  # saturated transform: the Jacobian vanishes
        if not np.abs(z[nb:]).max() < 100.0:
            return -np.inf
        lj, _ = self._log_jacobian(z)
        v = self.log_density_constrained(x) + lj
        return float(v) if np.isfinite(v) else -np.inf

    def __call__(self, z):
        return self.log_density_and_gradient(z)

    def log_density_and_gradient(self, z):
        """Log posterior and its gradient in unconstrained coordinates.

        Returns ``(-inf, zeros)`` where the model cannot be evaluated.
        """
        z = np.asarray(z, dtype=float)
        bad = (-np.inf, np.zeros(self.dim))
        nb = self.n_bounded
        zb = z[:nb]
        if not (np.abs(zb).max(initial=0.0) < 700.0 and np.abs(z[nb:]).max() < 100.0):
            return bad  # also catches nan; keeps sigma**3 finite
        # transform, log-Jacobian and prior in one pass
        sg = 1.0 / (1.0 + np.exp(-zb))
        xb = self.lower + self.width * sg
        sig = np.exp(z[nb:])
        dxb = self.width * sg * (1.0 - sg)
        if dxb.min() <= 0 or (xb - self.lower).min() <= 0 or (self.upper - xb).min() <= 0:
            return bad  # sigmoid saturated: the Jacobian vanishes
        s = self.half_normal_scales
        value = float(np.sum(np.log(dxb)) + np.sum(z[nb:]) + self._log_prior_const - 0.5 * np.sum((sig / s) ** 2))
        gz = np.empty(self.dim)
        gz[:nb] = 1.0 - 2.0 * sg
        gz[nb:] = 1.0 - (sig / s) ** 2
        if self.use_modal or self.use_static:
            try:
                f = self._forward(xb[: self.n_mass], xb[self.n_mass :])
            except (PosteriorEvaluationError, np.linalg.LinAlgError):
                return bad
            lv, g_struct, g_sig = self._likelihood_and_gradient(f, sig)
            value += lv
            gz[:nb] += g_struct * dxb
            gz[nb:] += g_sig * sig
        if not math.isfinite(value + gz.sum()):
            return bad
        return value, gz

    def _likelihood_and_gradient(self, f, sig):
        sw, sd, sr = sig
        K = self.n_modes
        N = self.d_bar.shape[0]
        om, d_hat = f["om"], f["d_hat"]
        ew = self.omega_bar - om
        ed = self.d_bar - d_hat
        value = 0.0
        g_sig = np.zeros(3)
        g_om = np.zeros(K)
        g_d = np.zeros_like(ed)
        static = self.use_static and self.r_bar.size > 0
        if self.use_modal:
            sw2, sd2 = float(ew @ ew), float(np.sum(ed * ed))
            value += (-0.5 * sw2 / sw**2 - K * (math.log(sw) + 0.5 * LOG_2PI)
                      - 0.5 * sd2 / sd**2 - K * N * (math.log(sd) + 0.5 * LOG_2PI))
            g_om += ew / sw**2
            g_d += ed / sd**2
            g_sig[0] = sw2 / sw**3 - K / sw
            g_sig[1] = sd2 / sd**3 - K * N / sd
        if static:
            er = self.r_bar - f["r_hat"]
            sr2 = float(np.sum(er * er))
            value += -0.5 * sr2 / sr**2 - er.size * (math.log(sr) + 0.5 * LOG_2PI)
            g_d += f["S"].T @ er / sr**2
            W_S = er @ d_hat.T / sr**2
            g_sig[2] = sr2 / sr**3 - er.size / sr

        # back through the eigen-solution: adjoints on Kr (matrix) and mass (diagonal)
        lam, Phi, nrm, pair, sgn = f["lam"], f["Phi"], f["nrm"], f["pair"], f["sgn"]
        n = lam.size
        W_K = np.zeros((n, n))
        w_M = np.zeros(n)
        for k in range(K):
            i = pair[k]
            phi = Phi[:, i]
            u = phi / nrm[i]
            gd = sgn[k] * g_d[:, k]
            g_phi = (gd - u * (u @ gd)) / nrm[i]
            h = g_om[k] / (2.0 * om[k])  # d ell / d lambda_i
            a = Phi.T @ g_phi
            gap = lam[i] - lam
            gap[i] = np.inf
            v = Phi @ (a / gap)
            W_K += phi[:, None] * (h * phi + v)
            w_M -= phi * (lam[i] * (h * phi + v) + 0.5 * a[i] * phi)

        kern = self.kernel
        g_mass = kern.patterns @ w_M

        # adjoint on the full stiffness, then on the unassembled blocks
        Gamma = f["Gamma"]
        nm = kern.nm
        W_full = Gamma @ W_K @ Gamma.T
        if static:
            Qs = f["BKH"][:, nm:].T @ W_S  # adjoint of the slave rows of Gamma
            Y, _ = lapack.dpotrs(f["chol"], Qs, lower=1)
            W_full[nm:, :] -= Y @ Gamma.T
            Wm = kern.HT @ W_full @ kern.H + self.S_rows.T @ (W_S @ (Gamma.T @ kern.H))
        else:
            Wm = kern.HT @ W_full @ kern.H
        g_stiff = kern.grad_theta_K(Wm, f["aux"])
        return value, np.concatenate([g_mass, g_stiff]), g_sig

    def fd_gradient(self, z, h: float = 1e-5) -> np.ndarray:
        """Central finite differences of :meth:`log_density` (relative step)."""
        z = np.asarray(z, dtype=float)
        g = np.empty_like(z)
        for i in range(z.size):
            step = h * max(1.0, abs(z[i]))
            zp, zm = z.copy(), z.copy()
            zp[i] += step
            zm[i] -= step
            g[i] = (self.log_density(zp) - self.log_density(zm)) / (2 * step)
        return g

    # -- initialisation ------------------------------------------------------------
    def initial_point(self, rng: np.random.Generator, max_tries: int = 100) -> np.ndarray:
        """Random unconstrained start with finite density.

        Masses are drawn from the lower half of their prior range, other
        bounded parameters from the full range and error scales from their
        half-normal priors.
        """
        for _ in range(max_tries):
            x = np.empty(self.dim)
            nb = self.n_bounded
            lo, hi = self.lower.copy(), self.upper.copy()
            hi[: self.n_mass] = lo[: self.n_mass] + 0.5 * (hi[: self.n_mass] - lo[: self.n_mass])
            x[:nb] = rng.uniform(lo, hi)
            x[nb:] = np.abs(rng.normal(0.0, self.half_normal_scales))
            z = self.to_unconstrained(x)
            v, g = self.log_density_and_gradient(z)
            if np.isfinite(v):
                return z
        raise PosteriorEvaluationError("no initial point with finite log density found")


def true_dataset(model: FrameModel, theta_K, theta_M, n_modes: int = 2) -> ModalDataset:
    """Noise-free MD/MSR dataset computed directly from the model."""
    from ..frame_core import assemble, solve_modal
    from ..sysid import ModalEntry

    mats = assemble(model, theta_K, theta_M)
    w, phi = solve_modal(mats.K_red, mats.mass_red, n_modes)
    entries = [ModalEntry(float(w[k]), 0.0, phi[:, k].copy(), mats.S @ phi[:, k]) for k in range(n_modes)]
    return ModalDataset(entries, model.master_labels(), model.observed_labels(), {"source": "model"})
