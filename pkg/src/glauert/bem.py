"""Galerkin boundary element operators for the Helmholtz equation on the coupling surface.

Conventions: the normal ``n`` points out of the meshed interior into the
exterior; the kernel is ``E(x) = exp(i k |x|) / (4 pi |x|)`` and the
layer potentials are

    S lam(x) = int E(x - y) lam(y) dy,
    D mu(x)  = int d/dn_y E(x - y) mu(y) dy.

With these choices the double layer of the constant density equals ``-1``
inside, ``0`` outside and ``-1/2`` on a smooth surface, and an exterior
radiating field ``u`` with traces ``(g0, g1)`` satisfies
``(D - 1/2) g0 - S g1 = 0`` and ``N g0 + (D' + 1/2) g1 = 0`` where ``N`` is
the (positive) hypersingular operator.

Matrices are assembled against piecewise constants ``psi`` on faces and
continuous piecewise linears ``xi`` on vertices:

    S[i, j]  = <S psi_j, psi_i>     (q, q)
    D[i, j]  = <D xi_j, psi_i>      (q, r)
    Dt[i, j] = <D' psi_j, xi_i>     (r, q), equal to D.T
    N[i, j]  = <N xi_j, xi_i>       (r, r), Maue form
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .exceptions import DegenerateFaceError, NearSurfaceError, QuadratureError
from .mesh import GAMMA_INFINITY, triangle_normals
from .quadrature import COINCIDENT, EDGE, REGULAR, VERTEX, pair_rule, triangle_rule

logger = logging.getLogger(__name__)

_CHUNK = 1_500_000


@dataclass(frozen=True, eq=False)
class SurfaceSpaces:
    """P0 and P1 spaces on the coupling surface of a volume mesh.

    ``faces`` index into ``vertices`` (the surface vertex list), which is the
    sorted list of volume vertices ``vertex_ids`` lying on the surface.  The
    P1 dof ``j`` of the surface corresponds to volume dof
    ``n_interior + j`` of :class:`~glauert.fem.P1VolumeSpace`.
    """

    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray
    vertex_ids: np.ndarray
    areas: np.ndarray = field(init=False)
    centroids: np.ndarray = field(init=False)
    diameters: np.ndarray = field(init=False)

    def __post_init__(self):
        _, areas = triangle_normals(self.vertices, self.faces)
        if np.any(areas <= 1e-14 * max(areas.max(), 1e-300)):
            raise DegenerateFaceError(f"{int(np.sum(areas <= 0))} zero-area faces on the surface")
        v = self.vertices[self.faces]
        diam = np.max(np.linalg.norm(v - np.roll(v, 1, axis=1), axis=2), axis=1)
        object.__setattr__(self, "areas", areas)
        object.__setattr__(self, "centroids", v.mean(axis=1))
        object.__setattr__(self, "diameters", diam)

    @classmethod
    def from_mesh(cls, mesh, tag=GAMMA_INFINITY):
        faces = mesh.surface(tag)
        ids = np.unique(faces)
        local = np.searchsorted(ids, faces)
        return cls(vertices=mesh.vertices[ids], faces=local, normals=mesh.surface_normals(tag), vertex_ids=ids)

    @classmethod
    def from_triangles(cls, vertices, faces):
        vertices = np.asarray(vertices, dtype=float)
        faces = np.asarray(faces, dtype=np.int64)
        n, _ = triangle_normals(vertices, faces)
        return cls(vertices=vertices, faces=faces, normals=n, vertex_ids=np.arange(len(vertices)))

    @property
    def q(self):
        return len(self.faces)

    @property
    def r(self):
        return len(self.vertices)

    def incidence(self):
        """Sparse ``(q, r)`` face-vertex incidence."""
        rows = np.repeat(np.arange(self.q), 3)
        return sp.csr_matrix((np.ones(3 * self.q), (rows, self.faces.ravel())), shape=(self.q, self.r))

    def mass_p0_p1(self):
        """``M[i, j] = int psi_i xi_j`` as a sparse ``(q, r)`` matrix."""
        rows = np.repeat(np.arange(self.q), 3)
        vals = np.repeat(self.areas / 3.0, 3)
        return sp.csr_matrix((vals, (rows, self.faces.ravel())), shape=(self.q, self.r))

    def mass_p1_p1(self):
        ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
        vals = self.areas[:, None, None] * ref
        rows = np.repeat(self.faces, 3, axis=1).ravel()
        cols = np.tile(self.faces, (1, 3)).ravel()
        return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(self.r, self.r))

    def surface_gradients(self):
        """Constant surface gradients ``(q, 3, 3)`` of the three hat functions on each face."""
        v = self.vertices[self.faces]
        E = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)
        EtE = np.einsum("fdi,fdj->fij", E, E)
        g12 = np.linalg.solve(EtE, np.transpose(E, (0, 2, 1)))
        G = np.empty((self.q, 3, 3))
        G[:, 1:] = g12
        G[:, 0] = -g12.sum(axis=1)
        return G

    def surface_curls(self):
        return np.cross(self.normals[:, None, :], self.surface_gradients())

    def project_p0(self, func, degree=4):
        """Face averages of ``func`` (the L2 projection onto P0)."""
        bary, w = triangle_rule(degree)
        x = np.einsum("qa,fad->fqd", bary, self.vertices[self.faces])
        vals = func(x.reshape(-1, 3), np.repeat(self.normals, len(w), axis=0)).reshape(self.q, len(w))
        return vals @ w


class HelmholtzKernel:
    """Fundamental solution ``exp(i k r) / (4 pi r)`` and its derivatives."""

    def __init__(self, k):
        self.k = complex(k) if np.iscomplexobj(k) else float(k)

    def __repr__(self):
        return f"HelmholtzKernel(k={self.k!r})"

    def value(self, d):
        r = np.linalg.norm(d, axis=-1)
        return np.exp(1j * self.k * r) / (4 * np.pi * r)

    def radial(self, r):
        """``E(r)`` and ``E'(r) / r``."""
        e = np.exp(1j * self.k * r) / (4 * np.pi * r)
        return e, e * (1j * self.k * r - 1.0) / r**2

    def gradient(self, d):
        r = np.linalg.norm(d, axis=-1)
        _, g = self.radial(r)
        return g[..., None] * d

    def hessian(self, d):
        r = np.linalg.norm(d, axis=-1)
        e = np.exp(1j * self.k * r) / (4 * np.pi * r)
        a = 1j * self.k - 1.0 / r
        e1 = e * a
        e2 = e * (a**2 + 1.0 / r**2)
        dd = d[..., :, None] * d[..., None, :] / r[..., None, None] ** 2
        return (e1 / r)[..., None, None] * np.eye(3) + (e2 - e1 / r)[..., None, None] * dd


@dataclass(frozen=True, eq=False)
class BoundaryOperators:
    k: complex
    S: np.ndarray
    D: np.ndarray
    Dt: np.ndarray
    N: np.ndarray
    V1: np.ndarray  # P1 single layer, kept for diagnostics


@dataclass(frozen=True)
class BemQuadrature:
    singular_order: int = 4
    regular_degree: int = 4
    near_degree: int = 8
    near_factor: float = 1.5


def _pair_lists(spaces):
    """Unordered face pairs grouped by shared-vertex count, with aligned vertex orderings."""
    F = spaces.incidence()
    C = (F @ F.T).tocoo()
    shared = {}
    for i, j, c in zip(C.row, C.col, C.data.astype(int)):
        if i <= j:
            shared[(i, j)] = c
    faces = spaces.faces
    coinc, edge, vert = [], [], []
    for (i, j), c in shared.items():
        fi, fj = faces[i].tolist(), faces[j].tolist()
        if i == j:
            coinc.append((i, j, fi, fj))
        elif c == 2:
            common = [v for v in fi if v in fj]
            pi = common + [v for v in fi if v not in common]
            pj = common + [v for v in fj if v not in common]
            edge.append((i, j, pi, pj))
        elif c == 1:
            s = next(v for v in fi if v in fj)
            pi = [s] + [v for v in fi if v != s]
            pj = [s] + [v for v in fj if v != s]
            vert.append((i, j, pi, pj))
        else:
            raise QuadratureError(f"faces {i} and {j} share {c} vertices")
    out = {}
    for rel, lst in ((COINCIDENT, coinc), (EDGE, edge), (VERTEX, vert)):
        if lst:
            out[rel] = (np.array([t[0] for t in lst]), np.array([t[1] for t in lst]),
                        np.array([t[2] for t in lst]), np.array([t[3] for t in lst]))
    # remaining pairs are disjoint
    iu, ju = np.triu_indices(spaces.q, 1)
    touching = np.zeros((spaces.q, spaces.q), dtype=bool)
    touching[C.row, C.col] = True
    keep = ~touching[iu, ju]
    iu, ju = iu[keep], ju[keep]
    dist = np.linalg.norm(spaces.centroids[iu] - spaces.centroids[ju], axis=1)
    return out, iu, ju, dist


class BoundaryAssembler:
    """Assemble S, D, D' and N on a fixed surface for any number of wavenumbers.

    The panel-pair classification is computed once; each call to
    :meth:`assemble` evaluates the kernel on the cached pair lists.
    """

    def __init__(self, spaces, quadrature=None):
        self.spaces = spaces
        self.quad = quadrature or BemQuadrature()
        self._singular, iu, ju, dist = _pair_lists(spaces)
        h = np.maximum(spaces.diameters[iu], spaces.diameters[ju])
        near = dist < self.quad.near_factor * h
        faces = spaces.faces
        self._regular = []
        for mask, deg in ((near, self.quad.near_degree), (~near, self.quad.regular_degree)):
            if np.any(mask):
                self._regular.append((deg, iu[mask], ju[mask], faces[iu[mask]], faces[ju[mask]]))
        self._curls = spaces.surface_curls()

    def assemble(self, k):
        sp_ = self.spaces
        q, r = sp_.q, sp_.r
        S = np.zeros((q, q), dtype=complex)
        D = np.zeros((q, r), dtype=complex)
        V1 = np.zeros((r, r), dtype=complex)
        Ncurl = np.zeros((r, r), dtype=complex)
        Nmass = np.zeros((r, r), dtype=complex)
        groups = [(rel, self.quad.singular_order, *v) for rel, v in self._singular.items()]
        groups += [(REGULAR, deg, *v) for deg, *v in self._regular]
        kernel = HelmholtzKernel(k)
        for rel, order, I, J, PI, PJ in groups:
            bx, by, w = pair_rule(rel, order)
            step = max(1, _CHUNK // len(w))
            for s in range(0, len(I), step):
                sl = slice(s, s + step)
                self._accumulate(kernel, bx, by, w, I[sl], J[sl], PI[sl], PJ[sl], S, D, V1, Ncurl, Nmass)
        N = Ncurl - kernel.k**2 * Nmass
        return BoundaryOperators(k=kernel.k, S=S, D=D, Dt=D.T.copy(), N=N, V1=V1)

    def _accumulate(self, kernel, bx, by, w, I, J, PI, PJ, S, D, V1, Ncurl, Nmass):
        sp_ = self.spaces
        V = sp_.vertices
        X = np.einsum("qa,pad->pqd", bx, V[PI])
        Y = np.einsum("qa,pad->pqd", by, V[PJ])
        W = w[None, :] * (4.0 * sp_.areas[I] * sp_.areas[J])[:, None]
        d = X - Y
        rr = np.linalg.norm(d, axis=2)
        e, g = kernel.radial(rr)
        We = W * e
        s_val = We.sum(axis=1)
        sl11 = np.einsum("pq,qa,qb->pab", We, bx, by)
        # d/dn_y E(x - y) = g (y - x).n_y and d/dn_x E(x - y) = g (x - y).n_x
        Kg = W * g
        ny = sp_.normals[J]
        nx = sp_.normals[I]
        ky = Kg * np.einsum("pqd,pd->pq", -d, ny)
        kx = Kg * np.einsum("pqd,pd->pq", d, nx)
        dy = ky @ by
        dx = kx @ bx

        off = I != J
        # S
        np.add.at(S, (I, J), s_val)
        np.add.at(S, (J[off], I[off]), s_val[off])
        # D: test panel i (target x), trial hat on panel j (source y), and the swap
        np.add.at(D, (np.repeat(I, 3), PJ.ravel()), dy.ravel())
        np.add.at(D, (np.repeat(J[off], 3), PI[off].ravel()), dx[off].ravel())
        # P1 single layer and Maue pieces, in permuted local orderings
        cur = self._curls
        ci = _permuted(cur, sp_.faces, I, PI)
        cj = _permuted(cur, sp_.faces, J, PJ)
        cdot = np.einsum("pad,pbd->pab", ci, cj) * s_val[:, None, None]
        ndot = np.einsum("pd,pd->p", nx, ny)[:, None, None] * sl11
        rows = np.repeat(PI, 3, axis=1).ravel()
        cols = np.tile(PJ, (1, 3)).ravel()
        for M, val in ((V1, sl11), (Ncurl, cdot), (Nmass, ndot)):
            np.add.at(M, (rows, cols), val.ravel())
            vo = np.swapaxes(val[off], 1, 2)
            np.add.at(M, (np.repeat(PJ[off], 3, axis=1).ravel(), np.tile(PI[off], (1, 3)).ravel()), vo.ravel())


def _permuted(per_face, faces, idx, perm):
    """Reorder per-face, per-local-vertex data to match the permuted vertex lists."""
    f = faces[idx]
    pos = np.argmax(f[:, None, :] == perm[:, :, None], axis=2)
    return per_face[idx[:, None], pos]


_ASSEMBLERS = {}


def _assembler(spaces, quadrature=None):
    key = (id(spaces), quadrature)
    a = _ASSEMBLERS.get(key)
    if a is None or a.spaces is not spaces:
        a = BoundaryAssembler(spaces, quadrature)
        _ASSEMBLERS.clear()
        _ASSEMBLERS[key] = a
    return a


def _k(kernel):
    return kernel.k if isinstance(kernel, HelmholtzKernel) else kernel


def assemble_operators(spaces, kernel, quadrature=None):
    return _assembler(spaces, quadrature).assemble(_k(kernel))


def assemble_single_layer(spaces, kernel, quadrature=None):
    return assemble_operators(spaces, kernel, quadrature).S


def assemble_double_layer(spaces, kernel, quadrature=None):
    return assemble_operators(spaces, kernel, quadrature).D


def assemble_adjoint_double_layer(spaces, kernel, quadrature=None):
    return assemble_operators(spaces, kernel, quadrature).Dt


def assemble_hypersingular(spaces, kernel, quadrature=None):
    return assemble_operators(spaces, kernel, quadrature).N


# ---------------------------------------------------------------------------
# layer potentials


def check_far_from_surface(spaces, points, factor=1.0):
    """Raise :class:`NearSurfaceError` for points within ``factor`` local mesh sizes of a face."""
    points = np.atleast_2d(points)
    if len(points) == 0:
        return
    tree = cKDTree(spaces.centroids)
    reach = factor * spaces.diameters.max() + spaces.diameters.max()
    bad = []
    for i, idx in enumerate(tree.query_ball_point(points, reach)):
        if not idx:
            continue
        idx = np.asarray(idx)
        dist = _point_triangle_distance(points[i], spaces.vertices[spaces.faces[idx]])
        if np.any(dist < factor * spaces.diameters[idx]):
            bad.append(i)
    if bad:
        raise NearSurfaceError(f"{len(bad)} evaluation points lie within one mesh size of the surface", bad)


def _point_triangle_distance(p, tri):
    # exact distance from p to each triangle by projection and edge clamping
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n, axis=1)[:, None]
    h = np.einsum("fd,fd->f", p - a, n)
    proj = p - h[:, None] * n
    inside = np.ones(len(tri), dtype=bool)
    for u, v in ((a, b), (b, c), (c, a)):
        inside &= np.einsum("fd,fd->f", np.cross(v - u, proj - u), n) >= 0
    best = np.where(inside, np.abs(h), np.inf)
    for u, v in ((a, b), (b, c), (c, a)):
        e = v - u
        t = np.clip(np.einsum("fd,fd->f", p - u, e) / np.einsum("fd,fd->f", e, e), 0, 1)
        best = np.minimum(best, np.linalg.norm(p - (u + t[:, None] * e), axis=1))
    return best


def evaluate_potentials(spaces, lam, mu, points, kernel, degree=8, gradient=False, check=True):
    """Evaluate ``-S lam + D mu`` at points off the surface.

    Parameters
    ----------
    lam : (q,) complex
        P0 density.
    mu : (r,) complex
        P1 density.
    gradient : bool
        Also return the gradient ``(n, 3)``.
    """
    kernel = kernel if isinstance(kernel, HelmholtzKernel) else HelmholtzKernel(kernel)
    points = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, 3)
    if check:
        check_far_from_surface(spaces, points)
    lam = np.asarray(lam, dtype=complex)
    mu = np.asarray(mu, dtype=complex)
    bary, w = triangle_rule(degree)
    Y = np.einsum("qa,fad->fqd", bary, spaces.vertices[spaces.faces]).reshape(-1, 3)
    Wy = (spaces.areas[:, None] * w[None, :]).reshape(-1)
    ny = np.repeat(spaces.normals, len(w), axis=0)
    lam_y = np.repeat(lam, len(w))
    mu_y = np.einsum("qa,fa->fq", bary, mu[spaces.faces]).reshape(-1)
    out = np.zeros(len(points), dtype=complex)
    grad = np.zeros((len(points), 3), dtype=complex)
    step = max(1, _CHUNK // (4 * len(Y)))
    for s in range(0, len(points), step):
        x = points[s:s + step]
        d = x[:, None, :] - Y[None, :, :]
        rr = np.linalg.norm(d, axis=2)
        e, g = kernel.radial(rr)
        dn = -np.einsum("pqd,qd->pq", d, ny)
        out[s:s + step] = -(e * Wy) @ lam_y + (g * dn * Wy) @ mu_y
        if gradient:
            gS = np.einsum("pq,pqd->pd", g * (Wy * lam_y), d)
            H = kernel.hessian(d)
            gD = -np.einsum("pqde,qe,q->pd", H, ny, Wy * mu_y)
            grad[s:s + step] = -gS + gD
    return (out, grad) if gradient else out
