"""Planar frame matrices: semi-rigid beam elements, assembly, Guyan reduction.

Nodal DOFs are ordered with the master (measured) DOFs first, followed by the
slave DOFs, so that the recovery matrix ``Gamma`` is ``[I; -Kss^-1 Ksm]``.

Element stress resultants follow the basic (natural) system of a 2D beam:
``r = [N, M_i, M_j]`` with deformations ``e = [elongation, theta_i - psi,
theta_j - psi]`` where ``psi`` is the chord rotation. End moments are positive
counter-clockwise.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

DIRECTIONS = ("x", "y", "rz")

_LENGTH_UNITS = {"m": 1.0, "mm": 1e-3, "cm": 1e-2}
_FORCE_UNITS = {"N": 1.0, "kN": 1e3}


class FrameError(ValueError):
    """Base class for invalid frame definitions."""


class InvalidGeometryError(FrameError):
    pass


class ParameterDomainError(FrameError):
    pass


class ReductionSingularityError(FrameError):
    pass


class NumericalInputError(FrameError):
    pass


class ConsistencyError(FrameError):
    pass


# ---------------------------------------------------------------------------
# fixity factors


def fixity_from_rotational_stiffness(k, E, I, L):
    """Fixity factor ``(1 + 3EI / (L k))^-1`` of a rotational end spring.

    ``k = inf`` gives a rigid joint (1), ``k = 0`` a pin (0).
    """
    if E <= 0 or I <= 0 or L <= 0:
        raise InvalidGeometryError("E, I and L must be positive")
    k = np.asarray(k, dtype=float)
    if np.any(k < 0):
        raise ParameterDomainError("rotational stiffness must be nonnegative")
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = k / (k + 3.0 * E * I / L)
    gamma = np.where(np.isinf(k), 1.0, gamma)
    return float(gamma) if gamma.ndim == 0 else gamma


def rotational_stiffness_from_fixity(gamma, E, I, L):
    """Inverse of :func:`fixity_from_rotational_stiffness`."""
    if E <= 0 or I <= 0 or L <= 0:
        raise InvalidGeometryError("E, I and L must be positive")
    gamma = np.asarray(gamma, dtype=float)
    if np.any((gamma < 0) | (gamma > 1)):
        raise ParameterDomainError("fixity factor must lie in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        k = 3.0 * E * I / L * gamma / (1.0 - gamma)
    k = np.where(gamma == 1.0, np.inf, k)
    return float(k) if k.ndim == 0 else k


# ---------------------------------------------------------------------------
# model definition


@dataclass(frozen=True)
class Node:
    id: str
    x: float
    y: float


@dataclass(frozen=True)
class Element:
    """2D Euler-Bernoulli beam between two nodes.

    ``fixity`` holds, for the i and j ends, either a constant fixity factor
    or the name of a ``fixity`` parameter. ``stiffness_scale`` optionally names
    a ``log10_scale`` parameter multiplying the bending stiffness by
    ``10**value``.
    """

    id: str
    node_i: str
    node_j: str
    E: float
    A: float
    I: float
    density: float = 0.0
    fixity: tuple = (1.0, 1.0)
    stiffness_scale: str | None = None


@dataclass(frozen=True)
class Parameter:
    name: str
    kind: str  # "fixity" | "log10_scale" | "mass"
    lower: float
    upper: float
    target: float | None = None


@dataclass(frozen=True)
class ExtraMass:
    node: str
    dofs: tuple
    parameter: str
    fraction: float = 1.0


@dataclass(frozen=True)
class ObservedComponent:
    name: str
    element: str
    component: str  # "N", "Mi" or "Mj"


_COMPONENT_INDEX = {"N": 0, "Mi": 1, "Mj": 2}


@dataclass
class FrameModel:
    """Planar frame with its parameter map and measurement layout.

    Construction validates the definition and precomputes the geometry-only
    quantities (equilibrium matrix, self-weight masses), which never depend on
    the uncertain parameters.
    """

    nodes: list[Node]
    elements: list[Element]
    supports: dict[str, tuple]
    parameters: list[Parameter]
    master_dofs: list[tuple[str, str]]
    extra_masses: list[ExtraMass] = field(default_factory=list)
    observed: list[ObservedComponent] = field(default_factory=list)
    name: str = "frame"

    def __post_init__(self):
        self._node_index = {n.id: i for i, n in enumerate(self.nodes)}
        if len(self._node_index) != len(self.nodes):
            raise FrameError("duplicate node ids")
        self._element_index = {e.id: i for i, e in enumerate(self.elements)}
        self._param_index = {p.name: i for i, p in enumerate(self.parameters)}
        for p in self.parameters:
            if p.kind not in ("fixity", "log10_scale", "mass"):
                raise FrameError(f"unknown parameter kind {p.kind!r}")
            if not p.lower < p.upper:
                raise FrameError(f"parameter {p.name}: bounds must be ordered")
            if p.kind == "fixity" and (p.lower < 0 or p.upper > 1):
                raise FrameError(f"parameter {p.name}: fixity bounds must lie in [0, 1]")
            if p.kind == "mass" and p.lower < 0:
                raise FrameError(f"parameter {p.name}: mass bounds must be nonnegative")

        self.stiffness_params = [p for p in self.parameters if p.kind != "mass"]
        self.mass_params = [p for p in self.parameters if p.kind == "mass"]
        k_index = {p.name: i for i, p in enumerate(self.stiffness_params)}
        m_index = {p.name: i for i, p in enumerate(self.mass_params)}

        self._lengths = []
        self._dircos = []
        self._fix_refs = []  # per element: [(const or None, theta_K index or None)] * 2
        self._scale_refs = []
        for e in self.elements:
            for nid in (e.node_i, e.node_j):
                if nid not in self._node_index:
                    raise FrameError(f"element {e.id} references unknown node {nid}")
            if e.node_i == e.node_j:
                raise InvalidGeometryError(f"element {e.id} connects a node to itself")
            if e.E <= 0 or e.A <= 0 or e.I <= 0 or e.density < 0:
                raise InvalidGeometryError(f"element {e.id}: E, A, I must be positive")
            ni, nj = self.node(e.node_i), self.node(e.node_j)
            L = math.hypot(nj.x - ni.x, nj.y - ni.y)
            if L <= 0:
                raise InvalidGeometryError(f"element {e.id} has zero length")
            self._lengths.append(L)
            self._dircos.append(((nj.x - ni.x) / L, (nj.y - ni.y) / L))
            refs = []
            for f in e.fixity:
                if isinstance(f, str):
                    if f not in k_index or self.parameter(f).kind != "fixity":
                        raise FrameError(f"element {e.id}: {f!r} is not a fixity parameter")
                    refs.append((None, k_index[f]))
                else:
                    if not 0.0 <= float(f) <= 1.0:
                        raise ParameterDomainError(f"element {e.id}: fixity {f} outside [0, 1]")
                    refs.append((float(f), None))
            self._fix_refs.append(refs)
            if e.stiffness_scale is not None:
                s = e.stiffness_scale
                if s not in k_index or self.parameter(s).kind != "log10_scale":
                    raise FrameError(f"element {e.id}: {s!r} is not a log10_scale parameter")
                self._scale_refs.append(k_index[s])
            else:
                self._scale_refs.append(None)

        self._build_dof_map()
        self._build_equilibrium()
        self._build_mass_patterns(m_index)
        self._build_observation()

    # -- lookups ------------------------------------------------------------
    def node(self, node_id: str) -> Node:
        return self.nodes[self._node_index[node_id]]

    def element(self, element_id: str) -> Element:
        return self.elements[self._element_index[element_id]]

    def parameter(self, name: str) -> Parameter:
        return self.parameters[self._param_index[name]]

    @property
    def n_dof(self) -> int:
        return len(self.dof_map)

    @property
    def n_master(self) -> int:
        return len(self.master_dofs)

    @property
    def n_components(self) -> int:
        return 3 * len(self.elements)

    def element_length(self, index: int) -> float:
        return self._lengths[index]

    # -- construction helpers -----------------------------------------------
    def _build_dof_map(self):
        constrained = set()
        for nid, dofs in self.supports.items():
            if nid not in self._node_index:
                raise FrameError(f"support at unknown node {nid}")
            for d in dofs:
                if d not in DIRECTIONS:
                    raise FrameError(f"unknown direction {d!r}")
                constrained.add((nid, d))
        free = [(n.id, d) for n in self.nodes for d in DIRECTIONS if (n.id, d) not in constrained]
        masters = [tuple(m) for m in self.master_dofs]
        if len(set(masters)) != len(masters):
            raise FrameError("duplicate master DOFs")
        for m in masters:
            if m not in free:
                raise FrameError(f"master DOF {m} is not a free DOF")
        self.master_dofs = masters
        slaves = [f for f in free if f not in set(masters)]
        order = masters + slaves
        self.dof_map = {key: i for i, key in enumerate(order)}
        self.dof_keys = order
        self.constrained = constrained

    def _dof(self, nid, d):
        return self.dof_map.get((nid, d))

    def _build_equilibrium(self):
        n = self.n_dof
        H = np.zeros((n, self.n_components))
        for e_idx, e in enumerate(self.elements):
            L = self._lengths[e_idx]
            c, s = self._dircos[e_idx]
            rows = transformation(c, s, L)
            keys = [(e.node_i, d) for d in DIRECTIONS] + [(e.node_j, d) for d in DIRECTIONS]
            for local, (nid, d) in enumerate(keys):
                g = self._dof(nid, d)
                if g is not None:
                    H[g, 3 * e_idx : 3 * e_idx + 3] = rows[:, local]
        self.H = H

    def _build_mass_patterns(self, m_index):
        n = self.n_dof
        base = np.zeros(n)
        for e_idx, e in enumerate(self.elements):
            half = 0.5 * e.density * e.A * self._lengths[e_idx]
            for nid in (e.node_i, e.node_j):
                for d in ("x", "y"):
                    g = self._dof(nid, d)
                    if g is not None:
                        base[g] += half
        patterns = np.zeros((len(self.mass_params), n))
        for em in self.extra_masses:
            if em.parameter not in m_index:
                raise FrameError(f"extra mass references unknown mass parameter {em.parameter!r}")
            for d in em.dofs:
                g = self._dof(em.node, d)
                if g is None:
                    continue
                if g >= self.n_master:
                    raise FrameError(f"extra mass at {(em.node, d)} must sit on a master DOF")
                patterns[m_index[em.parameter], g] += em.fraction
        if np.any(base[self.n_master :] > 0):
            # self-weight on an unmeasured translation would break the massless-slave assumption
            bad = [self.dof_keys[i] for i in np.nonzero(base[self.n_master :] > 0)[0] + self.n_master]
            raise FrameError(f"translational DOFs {bad} carry self-weight but are not master DOFs")
        self.base_mass = base
        self.mass_patterns = patterns

    def _build_observation(self):
        rows = []
        for ob in self.observed:
            if ob.element not in self._element_index:
                raise FrameError(f"observed component on unknown element {ob.element}")
            if ob.component not in _COMPONENT_INDEX:
                raise FrameError(f"unknown stress-resultant component {ob.component!r}")
            rows.append(3 * self._element_index[ob.element] + _COMPONENT_INDEX[ob.component])
        self.observed_rows = np.array(rows, dtype=int)
        B = np.zeros((len(rows), self.n_components))
        B[np.arange(len(rows)), rows] = 1.0
        self.B = B

    # -- parameters -----------------------------------------------------------
    def split_parameters(self, values: dict[str, float]) -> tuple[np.ndarray, np.ndarray]:
        """Map a name -> value dict onto ``(theta_K, theta_M)`` vectors."""
        theta_K = np.array([values[p.name] for p in self.stiffness_params], dtype=float)
        theta_M = np.array([values[p.name] for p in self.mass_params], dtype=float)
        return theta_K, theta_M

    def targets(self) -> tuple[np.ndarray, np.ndarray]:
        return self.split_parameters({p.name: p.target for p in self.parameters})

    def check_parameters(self, theta_K, theta_M):
        theta_K = np.asarray(theta_K, dtype=float)
        theta_M = np.asarray(theta_M, dtype=float)
        if theta_K.shape != (len(self.stiffness_params),):
            raise ParameterDomainError(f"theta_K must have length {len(self.stiffness_params)}")
        if theta_M.shape != (len(self.mass_params),):
            raise ParameterDomainError(f"theta_M must have length {len(self.mass_params)}")
        for p, v in zip(self.stiffness_params, theta_K):
            if p.kind == "fixity" and not 0.0 <= v <= 1.0:
                raise ParameterDomainError(f"{p.name} = {v} outside [0, 1]")
        if np.any(theta_M < 0):
            raise ParameterDomainError("masses must be nonnegative")
        return theta_K, theta_M

    def element_fixities(self, e_idx: int, theta_K) -> tuple[float, float]:
        out = []
        for const, idx in self._fix_refs[e_idx]:
            out.append(const if idx is None else float(theta_K[idx]))
        return out[0], out[1]

    def element_scale(self, e_idx: int, theta_K) -> float:
        idx = self._scale_refs[e_idx]
        return 1.0 if idx is None else 10.0 ** float(theta_K[idx])

    # -- (de)serialisation ----------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "FrameModel":
        units = data.get("units", {})
        try:
            lu = _LENGTH_UNITS[units.get("length", "m")]
            fu = _FORCE_UNITS[units.get("force", "N")]
        except KeyError as exc:
            raise FrameError(f"unsupported unit {exc}") from None
        nodes = [Node(str(n["id"]), n["x"] * lu, n["y"] * lu) for n in data["nodes"]]
        elements = []
        for e in data["elements"]:
            fix = tuple(e.get("fixity", [1.0, 1.0]))
            if len(fix) != 2:
                raise FrameError(f"element {e['id']}: fixity needs two entries")
            elements.append(
                Element(
                    id=str(e["id"]),
                    node_i=str(e["nodes"][0]),
                    node_j=str(e["nodes"][1]),
                    E=e["E"] * fu / lu**2,
                    A=e["A"] * lu**2,
                    I=e["I"] * lu**4,
                    density=e.get("density", 0.0),
                    fixity=fix,
                    stiffness_scale=e.get("stiffness_scale"),
                )
            )
        supports = {str(s["node"]): tuple(s["dofs"]) for s in data.get("supports", [])}
        params = [
            Parameter(p["name"], p["kind"], float(p["bounds"][0]), float(p["bounds"][1]), p.get("target"))
            for p in data.get("parameters", [])
        ]
        extra = [
            ExtraMass(str(m["node"]), tuple(m["dofs"]), m["parameter"], float(m.get("fraction", 1.0)))
            for m in data.get("extra_masses", [])
        ]
        observed = [
            ObservedComponent(o["name"], str(o["element"]), o["component"])
            for o in data.get("observed_components", [])
        ]
        masters = [(str(m[0]), m[1]) for m in data["master_dofs"]]
        return cls(nodes, elements, supports, params, masters, extra, observed, data.get("name", "frame"))

    @classmethod
    def from_json(cls, path) -> "FrameModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def master_labels(self) -> list[str]:
        return [f"{nid}{d}" for nid, d in self.master_dofs]

    def observed_labels(self) -> list[str]:
        return [o.name for o in self.observed]


def bundled_model_path(name: str = "two_storey_frame.json") -> Path:
    return Path(__file__).parent / "data" / name


def load_two_storey_frame() -> FrameModel:
    """Two-story one-bay frame with six rotational springs and two floor masses."""
    return FrameModel.from_json(bundled_model_path())


# ---------------------------------------------------------------------------
# element stiffness


def basic_stiffness(E, A, I, L, gamma_i, gamma_j, scale=1.0):
    """3x3 basic stiffness ``[N, M_i, M_j]`` of a beam with end fixity factors."""
    for g in (gamma_i, gamma_j):
        if not 0.0 <= g <= 1.0:
            raise ParameterDomainError(f"fixity {g} outside [0, 1]")
    c = scale * E * I / L
    den = 4.0 - gamma_i * gamma_j
    kb = np.zeros((3, 3))
    kb[0, 0] = E * A / L
    kb[1, 1] = 12.0 * c * gamma_i / den
    kb[2, 2] = 12.0 * c * gamma_j / den
    kb[1, 2] = kb[2, 1] = 6.0 * c * gamma_i * gamma_j / den
    return kb


def basic_stiffness_derivatives(E, I, L, gamma_i, gamma_j, scale=1.0):
    """Derivatives of the bending block w.r.t. ``gamma_i``, ``gamma_j``.

    Returns two 3x3 arrays.
    """
    c = scale * E * I / L
    den2 = (4.0 - gamma_i * gamma_j) ** 2
    di = np.zeros((3, 3))
    dj = np.zeros((3, 3))
    di[1, 1] = 48.0 * c / den2
    di[2, 2] = 12.0 * c * gamma_j**2 / den2
    di[1, 2] = di[2, 1] = 24.0 * c * gamma_j / den2
    dj[2, 2] = 48.0 * c / den2
    dj[1, 1] = 12.0 * c * gamma_i**2 / den2
    dj[1, 2] = dj[2, 1] = 24.0 * c * gamma_i / den2
    return di, dj


def transformation(c, s, L):
    """3x6 map from global end displacements to basic deformations."""
    T = np.zeros((3, 6))
    T[0] = [-c, -s, 0.0, c, s, 0.0]
    psi = np.array([s / L, -c / L, 0.0, -s / L, c / L, 0.0])
    T[1] = -psi
    T[1, 2] += 1.0
    T[2] = -psi
    T[2, 5] += 1.0
    return T


def elemental_stiffness(model: FrameModel, element_id: str, theta_K):
    """Element stiffness in global coordinates and its basic 3x3 block.

    Returns ``(k_global (6x6), k_basic (3x3))``.
    """
    e_idx = model._element_index[element_id]
    e = model.elements[e_idx]
    gi, gj = model.element_fixities(e_idx, theta_K)
    kb = basic_stiffness(e.E, e.A, e.I, model._lengths[e_idx], gi, gj, model.element_scale(e_idx, theta_K))
    c, s = model._dircos[e_idx]
    T = transformation(c, s, model._lengths[e_idx])
    return T.T @ kb @ T, kb


# ---------------------------------------------------------------------------
# assembly


@dataclass(frozen=True)
class StructuralMatrices:
    """Assembled matrices at one parameter point.

    ``mass`` and ``mass_red`` are the diagonals of the lumped mass matrices.
    ``S`` maps master displacements to observed stress resultants
    (``B Km H^T Gamma``).
    """

    theta_K: np.ndarray
    theta_M: np.ndarray
    K: np.ndarray
    Km: np.ndarray
    H: np.ndarray
    mass: np.ndarray
    K_red: np.ndarray
    Gamma: np.ndarray
    mass_red: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        for name in ("theta_K", "theta_M", "K", "Km", "H", "mass", "K_red", "Gamma", "mass_red", "S"):
            getattr(self, name).setflags(write=False)


def unassembled_stiffness(model: FrameModel, theta_K) -> np.ndarray:
    ne = len(model.elements)
    Km = np.zeros((3 * ne, 3 * ne))
    for e_idx, e in enumerate(model.elements):
        gi, gj = model.element_fixities(e_idx, theta_K)
        kb = basic_stiffness(e.E, e.A, e.I, model._lengths[e_idx], gi, gj, model.element_scale(e_idx, theta_K))
        Km[3 * e_idx : 3 * e_idx + 3, 3 * e_idx : 3 * e_idx + 3] = kb
    return Km


def guyan_reduce(K: np.ndarray, n_master: int) -> tuple[np.ndarray, np.ndarray]:
    """Static condensation onto the leading ``n_master`` DOFs.

    Returns ``(K_red, Gamma)``.
    """
    n = K.shape[0]
    if n_master == n:
        return K.copy(), np.eye(n)
    Kss = K[n_master:, n_master:]
    Ksm = K[n_master:, :n_master]
    try:
        L = np.linalg.cholesky(Kss)
    except np.linalg.LinAlgError:
        raise ReductionSingularityError("slave stiffness block is singular (mechanism among slave DOFs)") from None
    diag = np.diag(L)
    if diag.min() <= 1e-7 * diag.max():
        raise ReductionSingularityError("slave stiffness block is numerically singular")
    X = np.linalg.solve(Kss, Ksm)
    Gamma = np.vstack([np.eye(n_master), -X])
    K_red = K[:n_master, :n_master] - K[:n_master, n_master:] @ X
    K_red = 0.5 * (K_red + K_red.T)
    return K_red, Gamma


def assemble(model: FrameModel, theta_K, theta_M) -> StructuralMatrices:
    """Assemble ``K = H Km H^T``, the lumped mass and the Guyan pair."""
    theta_K, theta_M = model.check_parameters(theta_K, theta_M)
    Km = unassembled_stiffness(model, theta_K)
    H = model.H
    K = H @ Km @ H.T
    K = 0.5 * (K + K.T)
    mass = model.base_mass + theta_M @ model.mass_patterns
    K_red, Gamma = guyan_reduce(K, model.n_master)
    S = model.B @ Km @ H.T @ Gamma
    return StructuralMatrices(
        theta_K=theta_K.copy(),
        theta_M=theta_M.copy(),
        K=K,
        Km=Km,
        H=H,
        mass=mass,
        K_red=K_red,
        Gamma=Gamma,
        mass_red=mass[: model.n_master].copy(),
        S=S,
    )


# ---------------------------------------------------------------------------
# modal and static analysis


def solve_modal(K_red, mass_red, n_modes: int | None = None, normalize: str = "euclidean"):
    """Generalised eigenproblem ``(K - w^2 M) d = 0`` with lumped ``M``.

    Parameters
    ----------
    K_red : (n, n) array
        Symmetric stiffness.
    mass_red : (n,) or (n, n) array
        Lumped mass, given as its diagonal or as a diagonal matrix.
    n_modes : int, optional
        Number of lowest modes returned (all by default).
    normalize : {"euclidean", "mass"}
        Unit Euclidean norm, or unit modal mass.

    Returns
    -------
    omega : (n_modes,) array
        Angular natural frequencies in ascending order.
    shapes : (n, n_modes) array
        Mode shapes as columns; each has its largest-magnitude entry positive.
    """
    K_red = np.asarray(K_red, dtype=float)
    m = np.asarray(mass_red, dtype=float)
    if m.ndim == 2:
        if np.any(m - np.diag(np.diag(m))):
            raise NumericalInputError("mass matrix must be diagonal")
        m = np.diag(m)
    n = K_red.shape[0]
    if K_red.shape != (n, n) or m.shape != (n,):
        raise NumericalInputError("inconsistent matrix dimensions")
    scale = np.abs(K_red).max() or 1.0
    if np.abs(K_red - K_red.T).max() > 1e-9 * scale:
        raise NumericalInputError("stiffness matrix is not symmetric")
    if np.any(m <= 0):
        raise NumericalInputError("mass must be positive on every retained DOF")
    w = 1.0 / np.sqrt(m)
    A = K_red * w[:, None] * w[None, :]
    lam, psi = np.linalg.eigh(0.5 * (A + A.T))
    if lam[0] < -1e-10 * max(abs(lam[-1]), 1.0):
        raise NumericalInputError("stiffness matrix is indefinite")
    lam = np.clip(lam, 0.0, None)
    k = n if n_modes is None else int(n_modes)
    phi = w[:, None] * psi[:, :k]
    if normalize == "euclidean":
        phi = phi / np.linalg.norm(phi, axis=0)
    elif normalize != "mass":
        raise ValueError(f"unknown normalisation {normalize!r}")
    idx = np.argmax(np.abs(phi), axis=0)
    signs = np.sign(phi[idx, np.arange(k)])
    phi = phi * signs
    return np.sqrt(lam[:k]), phi


def stress_resultants(model: FrameModel, theta_K, d_master, matrices: StructuralMatrices | None = None):
    """Observed stress resultants ``B Km H^T Gamma d`` for master displacements.

    ``d_master`` may be a vector or a matrix with one column per mode.
    """
    theta_K = np.asarray(theta_K, dtype=float)
    if matrices is None:
        matrices = assemble(model, theta_K, np.zeros(len(model.mass_params)))
    elif not np.array_equal(matrices.theta_K, theta_K):
        raise ConsistencyError("matrices were assembled at different stiffness parameters")
    d = np.asarray(d_master, dtype=float)
    if d.shape[0] != model.n_master:
        raise NumericalInputError(f"expected {model.n_master} master displacements")
    return matrices.S @ d


def mac(a, b) -> float:
    """Modal assurance criterion between two real or complex vectors."""
    a = np.asarray(a)
    b = np.asarray(b)
    return float(abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real))


def random_frame(rng: np.random.Generator, n_bays: int | None = None, n_stories: int | None = None) -> FrameModel:
    """Random rectangular frame, used for property tests and demos."""
    n_bays = n_bays or int(rng.integers(1, 3))
    n_stories = n_stories or int(rng.integers(1, 3))
    spans = rng.uniform(3.0, 8.0, n_bays)
    heights = rng.uniform(2.5, 4.5, n_stories)
    xs = np.concatenate([[0.0], np.cumsum(spans)])
    ys = np.concatenate([[0.0], np.cumsum(heights)])
    nodes = [Node(f"n{i}_{j}", xs[i], ys[j]) for j in range(n_stories + 1) for i in range(n_bays + 1)]
    params, elements, extra = [], [], []
    rnd_fix = lambda: rng.uniform(0.05, 1.0)  # noqa: E731
    k = 0
    for j in range(n_stories):
        for i in range(n_bays + 1):
            name = f"g{k}"
            params.append(Parameter(name, "fixity", 0.0, 1.0, rnd_fix()))
            k += 1
            elements.append(
                Element(f"c{i}_{j}", f"n{i}_{j}", f"n{i}_{j + 1}", 2.05e11, rng.uniform(4e-3, 9e-3),
                        rng.uniform(2e-5, 8e-5), 7850.0, (name if j == 0 else 1.0, 1.0))
            )
    for j in range(1, n_stories + 1):
        mname = f"m{j}"
        params.append(Parameter(mname, "mass", 0.0, 5e4, float(rng.uniform(500, 3000))))
        for i in range(n_bays):
            gi, gj = f"g{k}", f"g{k + 1}"
            k += 2
            params.append(Parameter(gi, "fixity", 0.0, 1.0, rnd_fix()))
            params.append(Parameter(gj, "fixity", 0.0, 1.0, rnd_fix()))
            elements.append(
                Element(f"b{i}_{j}", f"n{i}_{j}", f"n{i + 1}_{j}", 2.05e11, rng.uniform(3e-3, 6e-3),
                        rng.uniform(3e-5, 1e-4), 7850.0, (gi, gj))
            )
        for i in range(n_bays + 1):
            extra.append(ExtraMass(f"n{i}_{j}", ("x", "y"), mname, 1.0 / (n_bays + 1)))
    supports = {f"n{i}_0": ("x", "y", "rz") for i in range(n_bays + 1)}
    masters = [(f"n{i}_{j}", d) for j in range(1, n_stories + 1) for i in range(n_bays + 1) for d in ("x", "y")]
    observed = [ObservedComponent(f"r_{e.id}_{c}", e.id, c) for e in elements if e.id.startswith("c") for c in ("Mi", "Mj")]
    return FrameModel(nodes, elements, supports, params, masters, extra, observed, "random")


def random_parameters(model: FrameModel, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    theta_K = np.array([rng.uniform(0.05, 1.0) if p.kind == "fixity" else rng.uniform(0.0, 1.0)
                        for p in model.stiffness_params])
    theta_M = rng.uniform(200.0, 4000.0, len(model.mass_params))
    return theta_K, theta_M


def parameter_names(model: FrameModel) -> list[str]:
    return [p.name for p in model.stiffness_params] + [p.name for p in model.mass_params]


__all__: Sequence[str] = [
    "FrameModel",
    "StructuralMatrices",
    "assemble",
    "basic_stiffness",
    "elemental_stiffness",
    "fixity_from_rotational_stiffness",
    "guyan_reduce",
    "load_two_storey_frame",
    "mac",
    "rotational_stiffness_from_fixity",
    "solve_modal",
    "stress_resultants",
]
