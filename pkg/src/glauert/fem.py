"""P1 finite elements on the interior tetrahedral mesh."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .flow import coefficients_at
from .mesh import GAMMA_INFINITY
from .quadrature import tetrahedron_rule


@dataclass(frozen=True, eq=False)
class P1VolumeSpace:
    """Continuous piecewise-linear space with coupling-surface dofs last.

    ``dof_of_vertex[v]`` gives the dof of vertex ``v``; the first
    ``n_interior`` dofs belong to vertices off the coupling surface (object
    vertices included), the remaining ``n_trace`` ones to coupling-surface
    vertices in the order of ``trace_vertices``.
    """

    mesh: object
    trace_vertices: np.ndarray = field(init=False)
    interior_vertices: np.ndarray = field(init=False)
    dof_of_vertex: np.ndarray = field(init=False)

    def __post_init__(self):
        mesh = self.mesh
        trace = np.unique(mesh.surface(GAMMA_INFINITY))
        mask = np.ones(mesh.n_vertices, dtype=bool)
        mask[trace] = False
        interior = np.flatnonzero(mask)
        dof = np.empty(mesh.n_vertices, dtype=np.int64)
        dof[interior] = np.arange(len(interior))
        dof[trace] = len(interior) + np.arange(len(trace))
        for name, val in (("trace_vertices", trace), ("interior_vertices", interior), ("dof_of_vertex", dof)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_dofs(self):
        return self.mesh.n_vertices

    @property
    def n_interior(self):
        return len(self.interior_vertices)

    @property
    def n_trace(self):
        return len(self.trace_vertices)

    @property
    def vertex_of_dof(self):
        return np.concatenate([self.interior_vertices, self.trace_vertices])

    @property
    def cell_dofs(self):
        return self.dof_of_vertex[self.mesh.tets]

    def to_vertex_order(self, u):
        out = np.empty_like(u)
        out[self.vertex_of_dof] = u
        return out

    def from_vertex_values(self, values):
        return np.asarray(values)[self.vertex_of_dof]


def p1_gradients(vertices, tets):
    """Constant barycentric gradients ``(m, 4, 3)`` and volumes ``(m,)`` of each tetrahedron."""
    v = vertices[tets]
    J = np.transpose(v[:, 1:] - v[:, :1], (0, 2, 1))
    det = np.linalg.det(J)
    Jinv = np.linalg.inv(J)
    G = np.empty((len(tets), 4, 3))
    G[:, 1:] = Jinv
    G[:, 0] = -Jinv.sum(axis=1)
    return G, det / 6.0


def _scatter(space, local):
    dofs = space.cell_dofs
    rows = np.repeat(dofs, 4, axis=1).ravel()
    cols = np.tile(dofs, (1, 4)).ravel()
    n = space.n_dofs
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def assemble_stiffness(space):
    G, vol = p1_gradients(space.mesh.vertices, space.mesh.tets)
    return _scatter(space, vol[:, None, None] * np.einsum("eid,ejd->eij", G, G))


def assemble_mass(space):
    _, vol = p1_gradients(space.mesh.vertices, space.mesh.tets)
    ref = (np.ones((4, 4)) + np.eye(4)) / 20.0
    return _scatter(space, vol[:, None, None] * ref)


@dataclass(frozen=True, eq=False)
class InteriorForm:
    """Assembled interior form and its parts (all complex CSR, dof ordering).

    ``matrix = stiffness_part - mass_part + convection_part``.
    """

    matrix: sp.csr_matrix
    stiffness_part: sp.csr_matrix
    mass_part: sp.csr_matrix
    convection_part: sp.csr_matrix


def assemble_interior_form(space, flow, ambient=None, pg_map=None, degree=2, parts=False):
    """Galerkin matrix of the interior sesquilinear form.

    Entry ``(i, j)`` is the form evaluated with trial ``theta_j`` and test
    ``theta_i``::

        int r Xi grad(theta_j).grad(theta_i) - int r k^2 beta theta_j theta_i
            + i int r k V.(theta_j grad(theta_i) - theta_i grad(theta_j))

    with coefficients sampled at the points of the tetrahedral rule of the
    given ``degree``.

    Returns
    -------
    scipy.sparse.csr_matrix or InteriorForm
        The matrix, or all three contributions when ``parts`` is true.
    """
    mesh = space.mesh
    ambient = ambient or flow.ambient
    G, vol = p1_gradients(mesh.vertices, mesh.tets)
    bary, w = tetrahedron_rule(degree)
    m, nq = mesh.n_tets, len(w)
    X = np.einsum("qa,ead->eqd", bary, mesh.vertices[mesh.tets])
    cells = np.repeat(np.arange(m), nq)
    B = np.tile(bary, (m, 1))
    c = coefficients_at(X.reshape(-1, 3), flow, ambient, pg_map, cells=cells, bary=B)
    wq = (vol[:, None] * w[None, :]).reshape(-1)

    rXi = (wq * c.r)[:, None, None] * c.Xi
    rXi = rXi.reshape(m, nq, 3, 3).sum(axis=1)
    K = np.einsum("eid,edf,ejf->eij", G, rXi, G)

    s = (wq * c.r * c.k**2 * c.beta).reshape(m, nq)
    Mloc = np.einsum("eq,qi,qj->eij", s, bary, bary)

    rkV = ((wq * c.r * c.k)[:, None] * c.V).reshape(m, nq, 3)
    # a[e, q, i] = V . grad(theta_i) at quadrature point q
    a = np.einsum("eqd,eid->eqi", rkV, G)
    C = 1j * (np.einsum("eqi,qj->eij", a, bary) - np.einsum("eqj,qi->eij", a, bary))

    Kg, Mg, Cg = (_scatter(space, x).astype(complex) for x in (K, Mloc, C))
    A = (Kg - Mg + Cg).tocsr()
    A.sort_indices()
    if parts:
        return InteriorForm(A, Kg, Mg, Cg)
    return A


def export_matrix_market(path, matrix, comment=""):
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix), comment=comment)
