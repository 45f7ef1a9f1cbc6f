"""Subspace identification and conversion of complex modes to MD/MSR data."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import signal


class IdentificationError(RuntimeError):
    pass


class OrderTooHighError(IdentificationError):
    def __init__(self, order, rank):
        super().__init__(f"requested order {order} exceeds the detected rank {rank}")
        self.order = order
        self.rank = rank


class ReferenceSelectionError(ValueError):
    pass


@dataclass(frozen=True)
class StateSpaceRealization:
    A: np.ndarray
    B: np.ndarray | None
    C: np.ndarray
    D: np.ndarray | None
    dt: float
    singular_values: np.ndarray = field(default=None, repr=False)

    @property
    def order(self) -> int:
        return self.A.shape[0]

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def simulate(self, inputs, x0=None) -> np.ndarray:
        """Output for inputs shaped (N, p)."""
        u = np.atleast_2d(np.asarray(inputs, dtype=float))
        if u.shape[0] == 1 and u.shape[1] != self.B.shape[1]:
            u = u.T
        x = np.zeros(self.order) if x0 is None else np.asarray(x0, dtype=float)
        xs = np.empty((u.shape[0], self.order))
        AT, Bu = self.A.T, u @ self.B.T
        for k in range(u.shape[0]):
            xs[k] = x
            x = x @ AT + Bu[k]
        return (xs @ self.C.T + u @ self.D.T).real


def block_hankel(data: np.ndarray, rows: int, cols: int, start: int = 0) -> np.ndarray:
    """Block Hankel matrix of time-major ``data`` (N, m): ``rows`` blocks of m."""
    m = data.shape[1]
    H = np.empty((rows * m, cols))
    for r in range(rows):
        H[r * m : (r + 1) * m] = data[start + r : start + r + cols].T
    return H


def _as_time_major(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


def _lq_l(M: np.ndarray) -> np.ndarray:
    """Lower-triangular factor of the LQ decomposition ``M = L Q``."""
    R = np.linalg.qr(M.T, mode="r")
    return R.T


def _rank_check(s: np.ndarray, order: int, tol, shape):
    if order > s.size:
        raise OrderTooHighError(order, s.size)
    if tol is None:
        tol = max(shape) * np.finfo(float).eps
    rank = int(np.sum(s > tol * s[0])) if s[0] > 0 else 0
    if rank < order:
        raise OrderTooHighError(order, rank)


def _shift_solve(Gamma: np.ndarray, q: int):
    C = Gamma[:q]
    A = np.linalg.lstsq(Gamma[:-q], Gamma[q:], rcond=None)[0]
    return A, C


def _estimate_bd(A, C, u, y):
    """Least-squares B, D and initial state for fixed (A, C)."""
    N, p = u.shape
    q, n = C.shape
    # state responses to unit B entries and to the initial state
    ncol = n * p + n
    Z = np.zeros((n, ncol))
    Z[:, n * p :] = np.eye(n)
    resp = np.empty((N, q, ncol))
    E = np.zeros((n, n * p, p))  # maps u_k into the B-entry columns
    for r in range(n):
        for c in range(p):
            E[r, r * p + c, c] = 1.0
    for k in range(N):
        resp[k] = C @ Z
        Z = A @ Z
        Z[:, : n * p] += np.einsum("rjc,c->rj", E, u[k])
    Phi_d = np.zeros((N, q, q * p))
    for r in range(q):
        Phi_d[:, r, r * p : (r + 1) * p] = u
    Phi = np.concatenate([resp, Phi_d], axis=2).reshape(N * q, -1)
    theta = np.linalg.lstsq(Phi, y.reshape(-1), rcond=None)[0]
    B = theta[: n * p].reshape(n, p)
    x0 = theta[n * p : n * p + n]
    D = theta[n * p + n :].reshape(q, p)
    return B, D, x0


def moesp_identify(inputs, outputs, block_rows: int, order: int, dt: float = 1.0,
                   variant: str = "po", estimate_bd: bool = True, rank_tol: float | None = None) -> StateSpaceRealization:
    """MOESP identification from input/output records.

    Parameters
    ----------
    inputs : (N, p) array
    outputs : (N, q) array
    block_rows : int
        Number of block rows ``i`` of each block Hankel matrix.
    order : int
        State dimension.
    variant : {"po", "ordinary"}
        Past-output MOESP (past inputs and outputs as instruments) or
        ordinary MOESP.
    rank_tol : float, optional
        Relative singular-value threshold for the numerical rank; defaults to
        ``max(shape) * eps`` as in ``numpy.linalg.matrix_rank``.

    Channels are scaled to unit standard deviation internally; identically
    zero input channels are dropped and receive zero columns in B and D.
    """
    u = _as_time_major(inputs)
    y = _as_time_major(outputs)
    if u.shape[0] != y.shape[0]:
        raise ValueError("inputs and outputs must have the same length")
    N, p_all = u.shape
    q = y.shape[1]
    i = int(block_rows)
    if i * q <= order:
        raise OrderTooHighError(order, i * q)
    active = np.std(u, axis=0) > 0
    if not active.any():
        raise IdentificationError("all input channels are identically zero")
    ua = u[:, active]
    su = np.std(ua, axis=0)
    sy = np.std(y, axis=0)
    sy[sy == 0] = 1.0
    un, yn = ua / su, y / sy
    p = un.shape[1]

    if variant == "po":
        j = N - 2 * i + 1
        if j < 2 * i * (p + q):
            raise IdentificationError("record too short for the requested block rows")
        Up = block_hankel(un, i, j, 0)
        Uf = block_hankel(un, i, j, i)
        Yp = block_hankel(yn, i, j, 0)
        Yf = block_hankel(yn, i, j, i)
        L = _lq_l(np.vstack([Uf, Up, Yp, Yf]))
        a, b = i * p, i * p + i * (p + q)
        L32 = L[b:, a:b]
        Uo, s, _ = np.linalg.svd(L32, full_matrices=False)
        shape = L32.shape
    elif variant == "ordinary":
        j = N - i + 1
        if j < i * (p + q):
            raise IdentificationError("record too short for the requested block rows")
        U = block_hankel(un, i, j, 0)
        Y = block_hankel(yn, i, j, 0)
        L = _lq_l(np.vstack([U, Y]))
        L22 = L[i * p :, i * p :]
        Uo, s, _ = np.linalg.svd(L22, full_matrices=False)
        shape = L22.shape
    else:
        raise ValueError(f"unknown MOESP variant {variant!r}")
    _rank_check(s, order, rank_tol, shape)
    Gamma = Uo[:, :order] * np.sqrt(s[:order])
    A, Cn = _shift_solve(Gamma, q)
    C = Cn * sy[:, None]
    B = D = None
    if estimate_bd:
        Bn, Dn, _ = _estimate_bd(A, Cn, un, yn)
        B = np.zeros((order, p_all))
        D = np.zeros((q, p_all))
        B[:, active] = Bn / su
        D[:, active] = Dn * sy[:, None] / su
    return StateSpaceRealization(A, B, C, D, dt, s)


def stochastic_realization(outputs, block_rows: int, order: int, dt: float = 1.0,
                           rank_tol: float | None = None) -> StateSpaceRealization:
    """Output-only covariance-driven realisation of ``(A, C)``.

    The block Hankel matrix of output covariances is estimated as
    ``Yf Yp^T / j`` from past and future output Hankel matrices.
    """
    y = _as_time_major(outputs)
    N, q = y.shape
    i = int(block_rows)
    if i * q <= order:
        raise OrderTooHighError(order, i * q)
    j = N - 2 * i + 1
    if j <= 0:
        raise IdentificationError("record too short for the requested block rows")
    sy = np.std(y, axis=0)
    sy[sy == 0] = 1.0
    yn = y / sy
    # past blocks in reverse order: y_{i-1}, ..., y_0
    Yp = np.vstack([block_hankel(yn, 1, j, r) for r in range(i - 1, -1, -1)])
    Yf = block_hankel(yn, i, j, i)
    T = Yf @ Yp.T / j
    Uo, s, _ = np.linalg.svd(T)
    _rank_check(s, order, rank_tol, T.shape)
    Gamma = Uo[:, :order] * np.sqrt(s[:order])
    A, Cn = _shift_solve(Gamma, q)
    return StateSpaceRealization(A, None, Cn * sy[:, None], None, dt, s)


# ---------------------------------------------------------------------------
# modes


@dataclass(frozen=True)
class ComplexMode:
    omega: float
    damping: float
    pole: complex
    shape: np.ndarray
    accel: np.ndarray
    strain: np.ndarray
    contribution: float = float("nan")

    @property
    def frequency_hz(self) -> float:
        return self.omega / (2 * np.pi)


def continuous_pole(lam, dt):
    return np.log(lam) / dt


def extract_modes(realization: StateSpaceRealization, output_channel_roles=None, imag_tol: float = 1e-9,
                  inputs=None, output_scale=None):
    """Complex modes of a realisation, one per conjugate pair.

    ``output_channel_roles`` labels each output row "accel" or any other role
    (moments, strains); shapes are split accordingly.

    Returns
    -------
    modes : list of ComplexMode, ascending in frequency
    real_poles : list of complex
        Continuous-time poles of non-oscillatory (real) discrete eigenvalues.
    """
    lam, V = np.linalg.eig(realization.A)
    shapes = realization.C @ V
    q = realization.C.shape[0]
    contrib = np.full(lam.size, np.nan)
    if inputs is not None:
        contrib = modal_contributions(realization, inputs, output_scale, (lam, V))
    roles = list(output_channel_roles) if output_channel_roles is not None else ["accel"] * q
    if len(roles) != q:
        raise ValueError("one role per output channel is required")
    acc = np.array([r == "accel" for r in roles])
    modes, real = [], []
    for k in range(lam.size):
        if abs(lam[k].imag) <= imag_tol * max(abs(lam[k]), 1.0):
            real.append(continuous_pole(complex(lam[k]), realization.dt))
            continue
        if lam[k].imag < 0:
            continue
        s = continuous_pole(lam[k], realization.dt)
        w = abs(s)
        modes.append(ComplexMode(float(w), float(-s.real / w), complex(s), shapes[:, k], shapes[acc, k], shapes[~acc, k],
                                 float(contrib[k])))
    modes.sort(key=lambda m: m.omega)
    return modes, real


def modal_contributions(realization: StateSpaceRealization, inputs, output_scale=None, eig=None) -> np.ndarray:
    """Share of the output energy carried by each eigenvalue of ``A``.

    Each modal subsystem is driven by the recorded inputs; its response is
    measured on outputs divided by ``output_scale`` (per channel) so that
    channels of different units count alike. Conjugate pairs are reported on
    both members. Requires ``B``.
    """
    if realization.B is None:
        raise IdentificationError("modal contributions need the input matrix B")
    u = _as_time_major(inputs)
    lam, V = eig if eig is not None else np.linalg.eig(realization.A)
    Bm = np.linalg.solve(V, realization.B)
    Cm = realization.C @ V
    if output_scale is not None:
        Cm = Cm / np.asarray(output_scale, dtype=float)[:, None]
    e = np.empty(lam.size)
    for k in range(lam.size):
        z = signal.lfilter([0.0, 1.0], [1.0, -lam[k]], u @ Bm[k])
        e[k] = float(np.mean(np.abs(np.outer(z, Cm[:, k])) ** 2))
    total = e.sum()
    return e / total if total > 0 else e


def select_modes(modes, n_modes: int, band=(0.0, np.inf), max_damping: float = 0.2, rank: str = "frequency"):
    """Pick ``n_modes`` admissible modes, returned in ascending frequency.

    Admissible modes have damping in (0, max_damping) and lie inside ``band``
    (rad/s). ``rank="frequency"`` takes the lowest ones, ``"contribution"``
    the ones carrying the most output energy, which screens out the weakly
    excited poles a subspace model spends on fitting noise.
    """
    keep = [m for m in modes if 0 < m.damping < max_damping and band[0] <= m.omega <= band[1]]
    if len(keep) < n_modes:
        raise IdentificationError(f"only {len(keep)} admissible modes found, {n_modes} requested")
    if rank == "contribution":
        if any(not np.isfinite(m.contribution) for m in keep):
            raise IdentificationError("modal contributions are not available")
        keep = sorted(keep, key=lambda m: -m.contribution)[:n_modes]
        return sorted(keep, key=lambda m: m.omega)
    if rank != "frequency":
        raise ValueError(f"unknown ranking {rank!r}")
    return keep[:n_modes]


def ma_to_md(a_complex, omega):
    """Modal displacement ``-a / omega^2`` from modal acceleration."""
    if omega == 0:
        raise ValueError("omega must be nonzero")
    return -np.asarray(a_complex) / omega**2


def md_to_ma(d_complex, omega):
    return -np.asarray(d_complex) * omega**2


def rotate_to_real(d_complex, r_complex, ref_d: int, ref_r: int, preserve_relative_sign: bool = True,
                   magnitude_phase: bool = False):
    """Real mode shapes ``Re(x exp(-i theta_ref))``.

    With ``preserve_relative_sign`` the MSR is rotated by its reference phase
    shifted by pi whenever the two references are out of phase, so the sign
    relation between MD and MSR survives (the MSR reference may then be
    negative). ``magnitude_phase`` returns ``|x|`` with the sign of the rotated
    real part.
    """
    d = np.asarray(d_complex, dtype=complex)
    r = np.asarray(r_complex, dtype=complex)
    if d[ref_d] == 0:
        raise ReferenceSelectionError("MD reference component is zero")
    th_d = np.angle(d[ref_d])
    d_rot = d * np.exp(-1j * th_d)
    if r.size:
        if r[ref_r] == 0:
            raise ReferenceSelectionError("MSR reference component is zero")
        th_r = np.angle(r[ref_r])
        if preserve_relative_sign and np.cos(th_r - th_d) < 0:
            th_r += np.pi
        r_rot = r * np.exp(-1j * th_r)
    else:
        r_rot = r
    if magnitude_phase:
        return np.abs(d_rot) * np.sign(d_rot.real), np.abs(r_rot) * np.sign(r_rot.real)
    return d_rot.real, r_rot.real


def normalize_pair(d_real, r_real):
    """Divide MD and MSR by the Euclidean norm of the MD.

    Returns ``(d, r, factor)``.
    """
    d = np.asarray(d_real, dtype=float)
    r = np.asarray(r_real, dtype=float)
    nrm = float(np.linalg.norm(d))
    if nrm == 0:
        raise ValueError("MD vector is zero")
    return d / nrm, r / nrm, nrm


def strain_to_mbm(eps_east, eps_west, E, Z):
    """Bending moment from edge strains, ``(eps_E - eps_W) E Z / 2``."""
    if E <= 0 or Z <= 0:
        raise ValueError("E and Z must be positive")
    return (np.asarray(eps_east) - np.asarray(eps_west)) * E * Z / 2.0


def interpolate_moments(m_a, z_a, m_b, z_b, z_targets):
    """Linear extrapolation of two cross-section moments to other positions."""
    z = np.asarray(z_targets, dtype=float)
    return m_a + (np.asarray(m_b) - m_a) * (z - z_a) / (z_b - z_a)


# ---------------------------------------------------------------------------
# datasets


@dataclass
class ModalEntry:
    omega: float
    damping: float
    d_bar: np.ndarray
    r_bar: np.ndarray
    ref_d: int = 0
    ref_r: int = 0
    norm_factor: float = 1.0


@dataclass
class ModalDataset:
    """Observed modes with MD labels (master DOFs) and MSR labels."""

    modes: list[ModalEntry]
    md_labels: list[str]
    msr_labels: list[str]
    metadata: dict = field(default_factory=dict)

    @property
    def omega(self) -> np.ndarray:
        return np.array([m.omega for m in self.modes])

    @property
    def D(self) -> np.ndarray:
        return np.column_stack([m.d_bar for m in self.modes])

    @property
    def R(self) -> np.ndarray:
        return np.column_stack([m.r_bar for m in self.modes])

    def to_dict(self) -> dict:
        return {
            "md_labels": list(self.md_labels),
            "msr_labels": list(self.msr_labels),
            "modes": [
                {
                    "omega": m.omega,
                    "frequency_hz": m.omega / (2 * np.pi),
                    "damping": m.damping,
                    "md": [float(v) for v in m.d_bar],
                    "msr": [float(v) for v in m.r_bar],
                    "reference_md": self.md_labels[m.ref_d],
                    "reference_msr": self.msr_labels[m.ref_r] if self.msr_labels else None,
                    "normalization_factor": m.norm_factor,
                }
                for m in self.modes
            ],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModalDataset":
        md, msr = d["md_labels"], d["msr_labels"]
        modes = [
            ModalEntry(
                float(m["omega"]),
                float(m.get("damping", 0.0)),
                np.array(m["md"], dtype=float),
                np.array(m["msr"], dtype=float),
                md.index(m["reference_md"]) if m.get("reference_md") in md else 0,
                msr.index(m["reference_msr"]) if m.get("reference_msr") in msr else 0,
                float(m.get("normalization_factor", 1.0)),
            )
            for m in d["modes"]
        ]
        return cls(modes, md, msr, d.get("metadata", {}))

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "ModalDataset":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class SysIdSettings:
    block_rows: int = 30
    order: int = 10
    n_modes: int = 2
    reference_md: str = "a3x"
    reference_msr: str = "r1i"
    variant: str = "po"
    max_damping: float = 0.2
    magnitude_phase: bool = False
    selection: str = "contribution"

    @classmethod
    def from_dict(cls, d: dict) -> "SysIdSettings":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def identify_dataset(channels: dict[str, np.ndarray], dt: float, input_names, accel_names, msr_names,
                     settings: SysIdSettings = SysIdSettings(), md_labels=None) -> ModalDataset:
    """Run MOESP on named channels and convert the first modes to MD/MSR data.

    ``accel_names`` are the acceleration outputs, one per master DOF in MD
    order; ``msr_names`` the stress-resultant outputs.
    """
    for name in list(input_names) + list(accel_names) + list(msr_names):
        if name not in channels:
            raise KeyError(f"channel {name!r} missing")
    u = np.column_stack([channels[c] for c in input_names])
    y = np.column_stack([channels[c] for c in list(accel_names) + list(msr_names)])
    by_contribution = settings.selection == "contribution"
    real = moesp_identify(u, y, settings.block_rows, settings.order, dt, settings.variant,
                          estimate_bd=by_contribution)
    roles = ["accel"] * len(accel_names) + ["msr"] * len(msr_names)
    scale = np.std(y, axis=0)
    scale[scale == 0] = 1.0
    modes, _ = extract_modes(real, roles, inputs=u if by_contribution else None, output_scale=scale)
    nyquist = np.pi / dt
    chosen = select_modes(modes, settings.n_modes, (0.0, nyquist), settings.max_damping, settings.selection)
    md_labels = list(md_labels) if md_labels is not None else [c[1:] if c.startswith("a") else c for c in accel_names]
    ref_d = list(accel_names).index(settings.reference_md)
    ref_r = list(msr_names).index(settings.reference_msr) if msr_names else 0
    entries = []
    for m in chosen:
        d_c = ma_to_md(m.accel, m.omega)
        d, r = rotate_to_real(d_c, m.strain, ref_d, ref_r, magnitude_phase=settings.magnitude_phase)
        d, r, f = normalize_pair(d, r)
        entries.append(ModalEntry(m.omega, m.damping, d, r, ref_d, ref_r, f))
    meta = {"sysid": settings.to_dict(), "n_modes_found": len(modes)}
    return ModalDataset(entries, md_labels, list(msr_names), meta)
