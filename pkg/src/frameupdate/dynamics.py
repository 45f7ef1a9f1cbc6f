"""Linear time-history analysis of the reduced frame under base excitation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .frame_core import FrameModel, assemble, solve_modal


class IntegrationError(RuntimeError):
    pass


def newmark(M, C, K, force, dt, u0=None, v0=None, beta=0.25, gamma=0.5):
    """Newmark-beta integration of ``M a + C v + K u = p(t)``.

    Parameters
    ----------
    M, C, K : (n, n) arrays
    force : (n_steps, n) array
        Load at every time step, starting at t = 0.
    dt : float
    u0, v0 : (n,) arrays, optional
        Initial displacement and velocity (zero by default).

    Returns
    -------
    u, v, a : (n_steps, n) arrays
    """
    M, C, K = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (M, C, K))
    p = np.asarray(force, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    n_steps, n = p.shape
    u0 = np.zeros(n) if u0 is None else np.asarray(u0, dtype=float)
    v0 = np.zeros(n) if v0 is None else np.asarray(v0, dtype=float)

    a0 = 1.0 / (beta * dt**2)
    a1 = gamma / (beta * dt)
    a2 = 1.0 / (beta * dt)
    a3 = 1.0 / (2.0 * beta) - 1.0
    a4 = gamma / beta - 1.0
    a5 = dt * (gamma / (2.0 * beta) - 1.0)
    Keff = K + a0 * M + a1 * C
    try:
        Kinv = np.linalg.inv(Keff)
    except np.linalg.LinAlgError:
        raise IntegrationError("effective stiffness is singular") from None
    if not np.all(np.isfinite(Kinv)):
        raise IntegrationError("effective stiffness is singular")

    # one-step map z_{k+1} = T z_k + G p_{k+1}, z = [u, v, a]
    I = np.eye(n)
    Z = np.zeros((n, n))
    U = Kinv @ np.hstack([a0 * M + a1 * C, a2 * M + a4 * C, a3 * M + a5 * C])
    Au = a0 * (U - np.hstack([I, Z, Z])) - np.hstack([Z, a2 * I, a3 * I])
    Av = np.hstack([Z, I, (1 - gamma) * dt * I]) + gamma * dt * Au
    T = np.vstack([U, Av, Au])
    Gu = Kinv
    Ga = a0 * Kinv
    G = np.vstack([Gu, gamma * dt * Ga, Ga])

    acc0 = np.linalg.solve(M, p[0] - C @ v0 - K @ u0)
    z = np.empty((n_steps, 3 * n))
    z[0] = np.concatenate([u0, v0, acc0])
    Gp = p @ G.T
    Tt = T.T
    for k in range(1, n_steps):
        z[k] = z[k - 1] @ Tt + Gp[k]
    if not np.all(np.isfinite(z)):
        raise IntegrationError("non-finite response")
    return z[:, :n], z[:, n : 2 * n], z[:, 2 * n :]


def peak(series) -> float:
    """Maximum absolute value."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValueError("empty series")
    return float(np.max(np.abs(x)))


@dataclass(frozen=True)
class TimeHistoryResult:
    """Responses sampled at ``dt``.

    ``accel`` holds absolute accelerations at the master DOFs, ``moments`` the
    observed stress resultants, ``displacement`` master displacements relative
    to the ground.
    """

    dt: float
    accel: np.ndarray
    moments: np.ndarray
    displacement: np.ndarray
    ground: np.ndarray
    accel_labels: list = field(default_factory=list)
    moment_labels: list = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return self.accel.shape[0]

    def time(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt

    def channels(self, ground_labels=("a1x", "a1y")) -> dict[str, np.ndarray]:
        """Named channels: ground inputs, accelerations, then moments."""
        out = {}
        for j, name in enumerate(ground_labels[: self.ground.shape[1]]):
            out[name] = self.ground[:, j]
        for j, name in enumerate(self.accel_labels):
            out[name] = self.accel[:, j]
        for j, name in enumerate(self.moment_labels):
            out[name] = self.moments[:, j]
        return out

    def channel(self, name: str) -> np.ndarray:
        if name in self.accel_labels:
            return self.accel[:, self.accel_labels.index(name)]
        if name in self.moment_labels:
            return self.moments[:, self.moment_labels.index(name)]
        raise KeyError(name)


def influence_vectors(model: FrameModel) -> np.ndarray:
    """(n_master, 2) rigid-body influence of unit ground motion in x and y."""
    iota = np.zeros((model.n_master, 2))
    for i, (_, d) in enumerate(model.master_dofs):
        if d == "x":
            iota[i, 0] = 1.0
        elif d == "y":
            iota[i, 1] = 1.0
    return iota


def stiffness_damping(K_red, mass_red, damping_ratio) -> np.ndarray:
    """Stiffness-proportional damping anchored to the first mode."""
    w, _ = solve_modal(K_red, mass_red, 1)
    return (2.0 * damping_ratio / w[0]) * K_red


def accel_labels(model: FrameModel) -> list[str]:
    return [f"a{nid}{d}" for nid, d in model.master_dofs]


def integrate(model: FrameModel, theta_K, theta_M, damping_ratio, ground_accel, dt,
              substeps: int = 1, method: str = "newmark", matrices=None) -> TimeHistoryResult:
    """Base-excited response of the reduced frame.

    Parameters
    ----------
    ground_accel : (n,) or (n, 2) array
        Horizontal (and optionally vertical) ground acceleration samples.
    dt : float
        Sampling period of input and output.
    substeps : int
        Newmark steps per sample; the input is interpolated linearly.
    method : {"newmark", "exact"}
        ``"exact"`` uses the zero-order-hold discretisation of the state-space
        model instead of Newmark (no period elongation).
    """
    if damping_ratio < 0:
        raise ValueError("damping ratio must be nonnegative")
    mats = assemble(model, theta_K, theta_M) if matrices is None else matrices
    ag = np.asarray(ground_accel, dtype=float)
    if ag.ndim == 1:
        ag = ag[:, None]
    if ag.shape[1] > 2:
        raise ValueError("ground acceleration has at most two components")
    n = ag.shape[0]
    iota = influence_vectors(model)[:, : ag.shape[1]]
    K = mats.K_red
    m = mats.mass_red
    M = np.diag(m)
    C = stiffness_damping(K, m, damping_ratio)
    ag_dofs = ag @ iota.T  # (n, n_master)

    if method == "newmark":
        if substeps < 1:
            raise ValueError("substeps must be >= 1")
        if substeps == 1:
            agf = ag_dofs
        else:
            tf = np.arange((n - 1) * substeps + 1) * (dt / substeps)
            t = np.arange(n) * dt
            agf = np.column_stack([np.interp(tf, t, ag_dofs[:, j]) for j in range(ag_dofs.shape[1])])
        u, _, a = newmark(M, C, K, -agf * m, dt / substeps)
        u, a = u[::substeps], a[::substeps]
    elif method == "exact":
        u, a = _zoh_response(M, C, K, ag_dofs, dt)
    else:
        raise ValueError(f"unknown method {method!r}")
    acc_abs = a + ag_dofs
    moments = u @ mats.S.T
    return TimeHistoryResult(dt, acc_abs, moments, u, ag, accel_labels(model), model.observed_labels())


def _zoh_response(M, C, K, ag_dofs, dt):
    n = K.shape[0]
    Minv = np.diag(1.0 / np.diag(M))
    Ac = np.block([[np.zeros((n, n)), np.eye(n)], [-Minv @ K, -Minv @ C]])
    Bc = np.vstack([np.zeros((n, n)), -np.eye(n)])
    # augmented exponential gives Ad and the ZOH input matrix together
    aug = np.zeros((3 * n, 3 * n))
    aug[: 2 * n, : 2 * n] = Ac
    aug[: 2 * n, 2 * n :] = Bc
    E = scipy.linalg.expm(aug * dt)
    Ad, Bd = E[: 2 * n, : 2 * n], E[: 2 * n, 2 * n :]
    x = np.zeros((ag_dofs.shape[0], 2 * n))
    AdT, Bu = Ad.T, ag_dofs @ Bd.T
    for k in range(1, x.shape[0]):
        x[k] = x[k - 1] @ AdT + Bu[k - 1]
    u, v = x[:, :n], x[:, n:]
    a = -(u @ (Minv @ K).T + v @ (Minv @ C).T) - ag_dofs
    return u, a


def total_energy(M, K, u, v) -> np.ndarray:
    return 0.5 * np.einsum("ti,ij,tj->t", v, M, v) + 0.5 * np.einsum("ti,ij,tj->t", u, K, u)
