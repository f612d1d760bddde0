"""Background flow models and the transformed coefficients of the interior equation.

All samplers take points in the transformed frame.  Mach vectors are
physical (they are not rotated or stretched by the map); only their
positions are mapped back before evaluating analytic flows.
"""
from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import ContinuityWarning, DomainError, SizeMismatchError, SupersonicError
from .mesh import GAMMA_INFINITY, PGMap

EPS_SUBSONIC = 1e-3


@dataclass(frozen=True)
class AmbientState:
    """Free-stream state.  ``mach_infinity`` may be a scalar (along ``axis``) or a vector."""

    rho_infinity: float = 1.2
    c_infinity: float = 340.0
    mach_infinity: tuple = (0.0, 0.0, 0.0)
    omega: float = 2 * np.pi * 100.0

    def __post_init__(self):
        m = np.asarray(self.mach_infinity, dtype=float)
        if m.ndim == 0:
            m = np.array([0.0, 0.0, float(m)])
        if np.linalg.norm(m) >= 1.0:
            raise SupersonicError(f"free-stream Mach number {np.linalg.norm(m):.4g} is not subsonic")
        if self.rho_infinity <= 0 or self.c_infinity <= 0:
            raise ValueError("ambient density and sound speed must be positive")
        object.__setattr__(self, "mach_infinity", tuple(float(x) for x in m))

    @classmethod
    def from_wavenumber(cls, k_hat, mach=0.0, rho_infinity=1.0, c_infinity=1.0):
        """State whose transformed wavenumber is ``k_hat``."""
        m = np.asarray(mach, dtype=float)
        mn = float(np.linalg.norm(m))
        gamma = 1.0 / np.sqrt(1.0 - mn**2)
        return cls(rho_infinity, c_infinity, tuple(np.atleast_1d(m)) if m.ndim else float(m),
                   omega=k_hat * c_infinity / gamma)

    @property
    def mach_vector(self):
        return np.array(self.mach_infinity)

    @property
    def pg_map(self):
        return PGMap(self.mach_infinity)

    @property
    def frequency(self):
        return self.omega / (2 * np.pi)

    @property
    def k_infinity(self):
        return self.omega / self.c_infinity

    @property
    def k_hat_infinity(self):
        return self.pg_map.gamma_infinity * self.k_infinity

    def with_omega(self, omega):
        return AmbientState(self.rho_infinity, self.c_infinity, self.mach_infinity, omega)


class FlowKind(enum.Enum):
    UNIFORM = "uniform"
    SPHERE_DIPOLE = "sphere_dipole"
    NODAL_DATA = "nodal_data"


@dataclass(frozen=True, eq=False)
class FlowField:
    """Point sampler of ``(rho0, c0, M0)``.

    Use :meth:`sample` for arbitrary transformed points.  Fields built from
    nodal data additionally accept ``cells`` and ``bary`` so that quadrature
    points of known tetrahedra are interpolated without a point search.
    """

    kind: FlowKind
    ambient: AmbientState
    params: dict = field(default_factory=dict)

    def sample(self, x, cells=None, bary=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = len(x)
        amb = self.ambient
        if self.kind is FlowKind.UNIFORM:
            rho = np.full(n, amb.rho_infinity)
            c = np.full(n, amb.c_infinity)
            M = np.tile(amb.mach_vector, (n, 1))
        elif self.kind is FlowKind.SPHERE_DIPOLE:
            xp = amb.pg_map.inverse(x)
            M = _dipole_mach(xp, self.params["radius"], np.asarray(self.params["center"]), amb.mach_vector,
                             self.params.get("inside_tolerance", 0.1))
            rho = np.full(n, amb.rho_infinity)
            c = np.full(n, amb.c_infinity)
        else:
            mesh = self.params["mesh"]
            nodal = self.params["nodal"]
            if cells is None:
                cells, bary = _locate(mesh, x, self.params)
            v = np.einsum("qa,qab->qb", bary, nodal[mesh.tets[cells]])
            rho, c, M = v[:, 0], v[:, 1], v[:, 2:5]
        k = amb.omega / c
        return rho, c, k, M

    def continuity_defect(self, mesh):
        """Largest relative deviation of (rho0, k0, M0) from ambient on the coupling surface."""
        idx = np.unique(mesh.surface(GAMMA_INFINITY))
        pts = mesh.vertices[idx]
        if self.kind is FlowKind.NODAL_DATA:
            v = self.params["nodal"][idx]
            rho, c, M = v[:, 0], v[:, 1], v[:, 2:5]
            k = self.ambient.omega / c
        else:
            rho, c, k, M = self.sample(pts)
        amb = self.ambient
        d_rho = np.max(np.abs(rho - amb.rho_infinity)) / amb.rho_infinity
        d_k = np.max(np.abs(k - amb.k_infinity)) / max(amb.k_infinity, 1e-300) if amb.k_infinity else 0.0
        d_M = np.max(np.linalg.norm(M - amb.mach_vector, axis=1))
        return float(max(d_rho, d_k, d_M))


def uniform_flow(ambient):
    return FlowField(FlowKind.UNIFORM, ambient)


def _dipole_mach(xp, a, center, minf, tol):
    rel = xp - center
    r = np.linalg.norm(rel, axis=1)
    inside = r < a * (1.0 - tol)
    if np.any(inside):
        raise DomainError(f"{int(inside.sum())} points lie inside the body (radius {a})")
    proj = rel @ minf
    r3 = r**3
    return minf + 0.5 * a**3 * (minf[None, :] / r3[:, None] - 3.0 * (proj / r3 / r**2)[:, None] * rel)


def sphere_dipole_flow(a, center, ambient, inside_tolerance=0.1):
    """Incompressible potential flow past a sphere of radius ``a`` (physical frame).

    ``M0 = M_inf + (a^3 / 2) (M_inf / r^3 - 3 (M_inf . x) x / r^5)`` with
    ``x`` relative to the centre; density and sound speed stay ambient.
    Points closer to the centre than ``a (1 - inside_tolerance)`` raise
    :class:`DomainError`; the slack admits quadrature points of a faceted
    body mesh.
    """
    if a <= 0:
        raise ValueError("sphere radius must be positive")
    return FlowField(FlowKind.SPHERE_DIPOLE, ambient,
                     {"radius": float(a), "center": tuple(np.asarray(center, dtype=float)),
                      "inside_tolerance": float(inside_tolerance)})


def _locate(mesh, x, params):
    tree = params.get("_tree")
    if tree is None:
        cent = mesh.vertices[mesh.tets].mean(axis=1)
        tree = cKDTree(cent)
        params["_tree"] = tree
    k = min(16, mesh.n_tets)
    _, cand = tree.query(x, k=k)
    cand = np.atleast_2d(cand.reshape(len(x), -1))
    cells = np.full(len(x), -1)
    bary = np.zeros((len(x), 4))
    best = np.full(len(x), -np.inf)
    for j in range(cand.shape[1]):
        t = cand[:, j]
        v = mesh.vertices[mesh.tets[t]]
        T = np.transpose(v[:, 1:] - v[:, :1], (0, 2, 1))
        lam = np.linalg.solve(T, (x - v[:, 0])[..., None])[..., 0]
        b = np.column_stack([1 - lam.sum(axis=1), lam])
        score = b.min(axis=1)
        better = score > best
        best[better] = score[better]
        cells[better] = t[better]
        bary[better] = b[better]
    if np.any(best < -1e-8):
        raise DomainError(f"{int(np.sum(best < -1e-8))} points lie outside the mesh")
    return cells, bary


def nodal_flow_from_file(path, mesh, ambient, tolerance=1e-2):
    """Read per-vertex flow data (CSV ``x,y,z,rho,c,Mx,My,Mz``) and interpolate in P1."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["x", "y", "z", "rho", "c", "Mx", "My", "Mz"]
        if reader.fieldnames is None or [h.strip() for h in reader.fieldnames] != expected:
            raise SizeMismatchError(f"{path}: header must be {','.join(expected)}")
        rows = [[float(r[h]) for h in expected[3:]] for r in reader]
    return nodal_flow(np.array(rows).reshape(-1, 5), mesh, ambient, tolerance)


def nodal_flow(values, mesh, ambient, tolerance=1e-2):
    """Flow from an ``(n_vertices, 5)`` array of ``rho, c, Mx, My, Mz``."""
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.n_vertices, 5):
        raise SizeMismatchError(f"flow data has {len(values)} rows, mesh has {mesh.n_vertices} vertices")
    speed = np.linalg.norm(values[:, 2:5], axis=1)
    if np.any(speed >= 1 - EPS_SUBSONIC):
        raise SupersonicError(f"nodal Mach number reaches {speed.max():.4g}")
    ff = FlowField(FlowKind.NODAL_DATA, ambient, {"mesh": mesh, "nodal": values})
    defect = ff.continuity_defect(mesh)
    if defect > tolerance:
        warnings.warn(f"flow deviates from ambient by {defect:.3g} on the coupling surface", ContinuityWarning,
                      stacklevel=2)
    return ff


def write_nodal_flow(path, mesh, flow):
    """Sample ``flow`` at mesh vertices and write the nodal CSV format."""
    rho, c, _, M = flow.sample(mesh.vertices)
    data = np.column_stack([mesh.vertices, rho, c, M])
    np.savetxt(path, data, delimiter=",", header="x,y,z,rho,c,Mx,My,Mz", comments="", fmt="%.17g")


@dataclass(frozen=True, eq=False)
class PGCoefficients:
    """Transformed coefficients at a batch of points (leading axis = point)."""

    r: np.ndarray
    q: np.ndarray
    P: np.ndarray
    beta: np.ndarray
    V: np.ndarray
    Xi: np.ndarray
    k: np.ndarray


def transformed_coefficients(rho, c, M, ambient, pg_map=None):
    """Evaluate ``r, q, P, beta, V, Xi`` from sampled flow quantities.

    ``q = gamma^2 k_inf / k`` is formed as ``gamma^2 c0 / c_inf`` so that it
    stays defined at zero frequency.
    """
    pg_map = pg_map or ambient.pg_map
    M = np.atleast_2d(np.asarray(M, dtype=float))
    speed = np.linalg.norm(M, axis=1)
    if np.any(speed >= 1 - EPS_SUBSONIC):
        raise SupersonicError(f"local Mach number reaches {speed.max():.4g}")
    minf = pg_map.mach_vector
    g = pg_map.gamma_infinity
    N = pg_map.matrix_N
    r = np.asarray(rho, dtype=float) / ambient.rho_infinity
    c = np.broadcast_to(np.asarray(c, dtype=float), r.shape)
    q = g**2 * c / ambient.c_infinity
    k = ambient.omega / c
    P = M @ minf
    a = 1.0 + q * P
    beta = a**2 - q**2 * (minf @ minf)
    NM = M @ N
    V = a[:, None] * NM - (q * g)[:, None] * minf
    O = np.eye(3) - M[:, :, None] * M[:, None, :]
    Xi = N @ O @ N
    return PGCoefficients(r=r, q=q, P=P, beta=beta, V=V, Xi=Xi, k=k)


def coefficients_at(x, flow, ambient=None, pg_map=None, cells=None, bary=None):
    """Transformed coefficients at points ``x`` (transformed frame)."""
    ambient = ambient or flow.ambient
    rho, c, _, M = flow.sample(x, cells=cells, bary=bary)
    return transformed_coefficients(rho, c, M, ambient, pg_map)
