"""Block systems of the FEM-BEM coupled formulations.

Unknowns are ordered ``[Phi_interior | Phi_trace | lam | p]``: volume P1
values off and on the coupling surface, the P0 surface density ``lam`` and,
for the stable formulation only, the auxiliary P1 surface field ``p``.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .bem import BemQuadrature, BoundaryAssembler, SurfaceSpaces
from .exceptions import DimensionMismatchError, EtaError
from .fem import P1VolumeSpace, assemble_interior_form
from .incident import incident_traces
from .regularizer import assemble_delta_form

logger = logging.getLogger(__name__)


class Formulation(enum.Enum):
    UNSTABLE = "unstable"
    STABLE = "stable"


@dataclass(frozen=True, eq=False)
class BlockSystem:
    """Block operator and right-hand side.

    ``blocks[(a, b)]`` is a sparse or dense matrix, or ``None`` for a
    structural zero.  ``sizes`` lists the block dimensions.
    """

    formulation: Formulation
    blocks: dict
    sizes: tuple
    rhs: np.ndarray
    eta: complex = None
    k: float = None
    spaces: object = None
    hints: dict = field(default_factory=dict)

    @property
    def n(self):
        return int(sum(self.sizes))

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.sizes)])

    def block(self, a, b):
        return self.blocks.get((a, b))

    def block_kind(self, a, b):
        B = self.blocks.get((a, b))
        if B is None:
            return "ZERO"
        return "SPARSE" if sp.issparse(B) else "DENSE"

    def split(self, x):
        o = self.offsets
        return [x[o[i]:o[i + 1]] for i in range(len(self.sizes))]

    def matvec(self, x):
        xs = self.split(np.asarray(x))
        out = [np.zeros(s, dtype=complex) for s in self.sizes]
        for (a, b), B in self.blocks.items():
            if B is not None:
                out[a] += B @ xs[b]
        return np.concatenate(out)

    def to_sparse(self):
        nb = len(self.sizes)
        grid = [[None] * nb for _ in range(nb)]
        for (a, b), B in self.blocks.items():
            if B is not None:
                grid[a][b] = sp.csr_matrix(B)
        for i in range(nb):
            if grid[i][i] is None:
                grid[i][i] = sp.csr_matrix((self.sizes[i], self.sizes[i]))
        return sp.bmat(grid, format="csr", dtype=complex)

    def to_dense(self):
        A = np.zeros((self.n, self.n), dtype=complex)
        o = self.offsets
        for (a, b), B in self.blocks.items():
            if B is not None:
                A[o[a]:o[a + 1], o[b]:o[b + 1]] = B.toarray() if sp.issparse(B) else B
        return A

    def linear_operator(self):
        from scipy.sparse.linalg import LinearOperator

        return LinearOperator((self.n, self.n), matvec=self.matvec, dtype=complex)


@dataclass(frozen=True, eq=False)
class Densities:
    Phi: np.ndarray
    lam: np.ndarray
    p_aux: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    @property
    def trace(self):
        """Values of ``Phi`` on the coupling-surface vertices (surface P1 order)."""
        return self.Phi[len(self.Phi) - self._n_trace:] if self._n_trace else self.Phi[:0]

    _n_trace: int = 0


def densities_from_vector(system, x):
    parts = system.split(x)
    Phi = np.concatenate(parts[:2])
    p_aux = parts[3] if len(parts) > 3 else np.zeros(0, dtype=complex)
    return Densities(Phi=Phi, lam=parts[2], p_aux=p_aux, _n_trace=system.sizes[1])


def _check_dims(fem_matrix, ops, spaces, n_trace):
    p = fem_matrix.shape[0]
    if fem_matrix.shape != (p, p):
        raise DimensionMismatchError("interior matrix is not square")
    if ops.S.shape != (spaces.q, spaces.q) or ops.D.shape != (spaces.q, spaces.r) or ops.N.shape != (spaces.r, spaces.r):
        raise DimensionMismatchError("boundary blocks do not match the surface spaces")
    if n_trace != spaces.r:
        raise DimensionMismatchError(f"{n_trace} coupling-surface volume dofs but {spaces.r} surface vertices")


def _split_fem(fem_matrix, n_trace):
    A = sp.csr_matrix(fem_matrix, dtype=complex)
    p = A.shape[0]
    ni = p - n_trace
    return A[:ni, :ni], A[:ni, ni:], A[ni:, :ni], A[ni:, ni:], ni


def assemble_unstable(fem_matrix, ops, spaces, traces, n_trace=None):
    """Three-block system over ``[Phi_interior | Phi_trace | lam]``."""
    n_trace = spaces.r if n_trace is None else n_trace
    _check_dims(fem_matrix, ops, spaces, n_trace)
    A11, A12, A21, V22, ni = _split_fem(fem_matrix, n_trace)
    M01 = spaces.mass_p0_p1()
    blocks = {
        (0, 0): A11, (0, 1): A12, (0, 2): None,
        (1, 0): A21, (1, 1): V22.toarray() + ops.N, (1, 2): ops.Dt - 0.5 * M01.T.toarray(),
        (2, 0): None, (2, 1): ops.D - 0.5 * M01.toarray(), (2, 2): -ops.S,
    }
    rhs = np.concatenate([np.zeros(ni, dtype=complex), traces.rhs_p1_neumann, -traces.rhs_p0])
    return BlockSystem(Formulation.UNSTABLE, blocks, (ni, spaces.r, spaces.q), rhs, k=ops.k, spaces=spaces,
                       hints={"boundary_trace_block": ops.N})


def assemble_stable(fem_matrix, ops, delta_form, spaces, traces, eta=1.0, n_trace=None, a43_sign=+1):
    """Four-block system over ``[Phi_interior | Phi_trace | lam | p]``.

    ``a43_sign`` selects ``D' + a43_sign/2`` in the auxiliary-row coupling to
    ``lam``; the variational statement uses ``+1``.
    """
    eta = complex(eta)
    if eta.real == 0:
        raise EtaError("the coupling parameter must have a nonzero real part")
    if a43_sign not in (1, -1):
        raise ValueError("a43_sign must be +1 or -1")
    un = assemble_unstable(fem_matrix, ops, spaces, traces, n_trace)
    M01 = spaces.mass_p0_p1().toarray()
    blocks = dict(un.blocks)
    blocks.update({
        (0, 3): None, (1, 3): None, (2, 3): 1j * np.conj(eta) * M01,
        (3, 0): None, (3, 1): ops.N, (3, 2): ops.Dt + 0.5 * a43_sign * M01.T, (3, 3): -delta_form.matrix.astype(complex),
    })
    rhs = np.concatenate([un.rhs, traces.rhs_p1_neumann])
    return BlockSystem(Formulation.STABLE, blocks, un.sizes + (spaces.r,), rhs, eta=eta, k=ops.k, spaces=spaces,
                       hints=un.hints)


class CouplingProblem:
    """Assembles block systems for one mesh, flow and incident field at any frequency.

    Parameters
    ----------
    mesh : TetMesh
        Mesh in the transformed frame.
    flow : FlowField
        Background flow; its ambient state fixes everything but the frequency.
    incident : IncidentField
        Incident field; its wavenumber is reset to ``k_hat`` at each frequency.
    """

    def __init__(self, mesh, flow, incident, fem_degree=2, bem_quadrature=None, a43_sign=+1):
        self.mesh = mesh
        self.flow = flow
        self.incident = incident
        self.fem_degree = fem_degree
        self.a43_sign = a43_sign
        self.space = P1VolumeSpace(mesh)
        self.spaces = SurfaceSpaces.from_mesh(mesh)
        if not np.array_equal(self.spaces.vertex_ids, self.space.trace_vertices):
            raise DimensionMismatchError("surface and volume trace orderings disagree")
        self.assembler = BoundaryAssembler(self.spaces, bem_quadrature or BemQuadrature())
        self.delta_form = assemble_delta_form(self.spaces)
        self._cache = {}

    def parts(self, omega):
        key = float(omega)
        if key not in self._cache:
            amb = self.flow.ambient.with_omega(omega)
            flow = type(self.flow)(self.flow.kind, amb, self.flow.params)
            fem = assemble_interior_form(self.space, flow, amb, degree=self.fem_degree)
            k_hat = amb.k_hat_infinity
            ops = self.assembler.assemble(k_hat)
            inc = self.incident.with_k(k_hat)
            traces = incident_traces(inc, self.spaces)
            self._cache = {key: (fem, ops, traces, inc, amb)}
        return self._cache[key]

    def system(self, omega, formulation=Formulation.UNSTABLE, eta=1.0):
        fem, ops, traces, _, _ = self.parts(omega)
        if Formulation(formulation) is Formulation.UNSTABLE:
            return assemble_unstable(fem, ops, self.spaces, traces)
        return assemble_stable(fem, ops, self.delta_form, self.spaces, traces, eta, a43_sign=self.a43_sign)


def solve_case(system, solver_config=None):
    """Solve ``system`` with preconditioned GMRES; returns ``(Densities, SolveReport)``."""
    from .solver import solve_system

    x, report = solve_system(system, **(solver_config or {}))
    return densities_from_vector(system, x), report
