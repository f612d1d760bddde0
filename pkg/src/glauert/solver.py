"""Full GMRES, sparse approximate inverses and conditioning studies."""
from __future__ import annotations

import csv
import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .exceptions import Breakdown, CapExceeded, NonConvergence, RankError, SingularPreconditioner

logger = logging.getLogger(__name__)


@dataclass
class SolveReport:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False
    true_residual: float = float("nan")

    @property
    def final_residual(self):
        return self.residuals[-1] if self.residuals else 0.0


def _as_matvec(A):
    if callable(A) and not hasattr(A, "shape"):
        return A
    if hasattr(A, "matvec"):
        return A.matvec
    return lambda x: A @ x


def gmres(A, b, precond=None, tol=1e-6, max_iter=2000, x0=None, callback=None):
    """Right-preconditioned GMRES without restart.

    Solves ``A x = b`` by minimising ``|b - A M y|`` over the Krylov space of
    ``A M`` and returning ``x = x0 + M y``.  The stopping test is on the
    relative residual ``|b - A x| / |b|``, which right preconditioning leaves
    unchanged.

    Parameters
    ----------
    A : matrix, LinearOperator, object with ``matvec`` or callable
    precond : callable, optional
        Action of ``M``; identity when omitted.

    Returns
    -------
    x : ndarray
    report : SolveReport
        ``residuals[0] = 1`` is the initial relative residual.
    """
    t0 = time.perf_counter()
    mv = _as_matvec(A)
    M = precond or (lambda v: v)
    b = np.asarray(b, dtype=complex)
    n = b.size
    bnorm = np.linalg.norm(b)
    report = SolveReport()
    x0 = np.zeros(n, dtype=complex) if x0 is None else np.asarray(x0, dtype=complex)
    if bnorm == 0:
        report.converged = True
        report.residuals = [0.0]
        report.true_residual = 0.0
        return np.zeros(n, dtype=complex), report
    r0 = b - mv(x0)
    beta = np.linalg.norm(r0)
    report.residuals.append(beta / bnorm)
    if beta / bnorm <= tol:
        report.converged = True
        report.true_residual = beta / bnorm
        return x0, report
    m = min(max_iter, n)
    Q = np.zeros((m + 1, n), dtype=complex)
    H = np.zeros((m + 1, m), dtype=complex)
    cs = np.zeros(m)
    sn = np.zeros(m, dtype=complex)
    g = np.zeros(m + 1, dtype=complex)
    g[0] = beta
    Q[0] = r0 / beta
    j = -1
    for j in range(m):
        w = mv(M(Q[j]))
        # modified Gram-Schmidt with one reorthogonalisation pass
        for _ in range(2):
            h = Q[:j + 1].conj() @ w
            w = w - h @ Q[:j + 1]
            H[:j + 1, j] += h
        hn = np.linalg.norm(w)
        H[j + 1, j] = hn
        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -np.conj(sn[i]) * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        a, c = H[j, j], H[j + 1, j]
        den = np.hypot(abs(a), abs(c))
        if den == 0:
            raise Breakdown(f"singular Hessenberg column at step {j + 1}")
        if a == 0:
            cs[j], sn[j] = 0.0, 1.0
        else:
            cs[j] = abs(a) / den
            sn[j] = (a / abs(a)) * np.conj(c) / den
        H[j, j] = cs[j] * a + sn[j] * c
        H[j + 1, j] = 0.0
        g[j + 1] = -np.conj(sn[j]) * g[j]
        g[j] = cs[j] * g[j]
        rel = abs(g[j + 1]) / bnorm
        report.residuals.append(float(rel))
        if callback is not None:
            callback(rel)
        happy = hn <= 1e-14 * beta
        if rel <= tol or happy:
            break
        Q[j + 1] = w / hn
    k = j + 1
    Hk = H[:k, :k]
    if np.any(np.abs(np.diag(Hk)) == 0):
        raise Breakdown("GMRES least-squares system is singular")
    y = _back_substitute(Hk, g[:k])
    x = x0 + M(y @ Q[:k])
    report.iterations = k
    report.true_residual = float(np.linalg.norm(b - mv(x)) / bnorm)
    report.converged = report.residuals[-1] <= tol or report.true_residual <= tol
    report.wall_time = time.perf_counter() - t0
    return x, report


def _back_substitute(R, g):
    from scipy.linalg import solve_triangular

    return solve_triangular(R, g, lower=False)


# ---------------------------------------------------------------------------
# sparse approximate inverse


def spai(A, pattern, strict=False):
    """Sparse approximate inverse over a fixed sparsity pattern.

    ``A`` is first restricted to ``pattern`` (giving ``A_sp``); each column
    ``m_j`` of the result minimises ``|A_sp m_j - e_j|`` with nonzeros
    allowed only where ``pattern[:, j]`` is set.

    Parameters
    ----------
    A : (n, n) dense or sparse matrix
    pattern : (n, n) sparse matrix whose nonzero structure is used
    strict : bool
        Raise :class:`RankError` on a rank-deficient column instead of
        falling back to a scaled unit column.

    Returns
    -------
    scipy.sparse.csc_matrix
    """
    pattern = sp.csc_matrix(pattern)
    pattern.data[:] = 1.0
    n = pattern.shape[0]
    if sp.issparse(A):
        Asp = sp.csc_matrix(A.multiply(pattern))
    else:
        Asp = sp.csc_matrix(pattern.multiply(np.asarray(A)))
    Asp.eliminate_zeros()
    Acsr = Asp.tocsr()
    rows, cols, vals = [], [], []
    fallbacks = 0
    for j in range(n):
        J = pattern.indices[pattern.indptr[j]:pattern.indptr[j + 1]]
        sub = Asp[:, J]
        I = np.unique(sub.indices)
        if len(I) == 0:
            raise SingularPreconditioner(f"column {j} of the sparsified block is empty")
        Ahat = sub[I].toarray()
        e = (I == j).astype(complex)
        sol, _, rank, _ = np.linalg.lstsq(Ahat, e, rcond=None)
        if rank < len(J):
            if strict:
                raise RankError(f"least-squares system for column {j} has rank {rank} < {len(J)}")
            fallbacks += 1
            d = Acsr[j, j]
            if d == 0:
                raise SingularPreconditioner(f"zero diagonal entry {j} in the sparsified block")
            J, sol = np.array([j]), np.array([1.0 / d])
        rows.append(J)
        cols.append(np.full(len(J), j))
        vals.append(sol)
    if fallbacks:
        warnings.warn(f"SPAI: {fallbacks} rank-deficient columns replaced by scaled unit columns", RuntimeWarning,
                      stacklevel=2)
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def _power_pattern(adj, radius):
    adj = sp.csr_matrix(adj, dtype=float)
    adj.data[:] = 1.0
    P = sp.identity(adj.shape[0], format="csr")
    for _ in range(radius):
        P = P @ (adj + sp.identity(adj.shape[0]))
        P.data[:] = 1.0
    return P


def face_pattern(spaces, radius=1):
    """Faces sharing a vertex, taken ``radius`` times."""
    F = spaces.incidence()
    return _power_pattern(F @ F.T, radius)


def vertex_pattern(spaces, radius=1):
    """Vertices sharing a face, taken ``radius`` times."""
    F = spaces.incidence()
    return _power_pattern(F.T @ F, radius)


class BlockPreconditioner:
    """Block-diagonal right preconditioner.

    Sparse diagonal blocks are factorised by LU; dense ones are replaced by
    their sparse approximate inverse.  For the coupling-surface block only
    the boundary (hypersingular) part is used unless ``include_volume`` is
    set.
    """

    def __init__(self, system, spai_radius=1, include_volume=False, direct_aux=True):
        self.sizes = system.sizes
        self.offsets = system.offsets
        self.actions = []
        spaces = system.spaces
        for i in range(len(system.sizes)):
            B = system.block(i, i)
            if i == 0:
                self.actions.append(_lu_action(B) if system.sizes[0] else (lambda v: v))
            elif i == 1:
                # the FEM part is left out unless requested
                target = B if include_volume else system.hints.get("boundary_trace_block", B)
                P = spai(target, vertex_pattern(spaces, spai_radius))
                self.actions.append(P.__matmul__)
            elif i == 2:
                P = spai(B, face_pattern(spaces, spai_radius))
                self.actions.append(P.__matmul__)
            else:
                if direct_aux:
                    self.actions.append(_lu_action(B))
                else:
                    P = spai(B, vertex_pattern(spaces, spai_radius))
                    self.actions.append(P.__matmul__)

    def __call__(self, v):
        o = self.offsets
        return np.concatenate([f(v[o[i]:o[i + 1]]) for i, f in enumerate(self.actions)])


def _lu_action(B):
    B = sp.csc_matrix(B, dtype=complex)
    try:
        lu = splu(B)
    except RuntimeError as exc:
        raise SingularPreconditioner(f"sparse LU failed: {exc}") from exc
    return lu.solve


def solve_system(system, tol=1e-6, max_iter=2000, preconditioner=True, spai_radius=1, include_volume=False,
                 raise_on_fail=True, residual_csv=None):
    """GMRES on a :class:`~glauert.coupling.BlockSystem`; returns ``(x, report)``."""
    M = BlockPreconditioner(system, spai_radius, include_volume) if preconditioner else None
    x, report = gmres(system, system.rhs, M, tol=tol, max_iter=max_iter)
    if residual_csv is not None:
        write_residual_csv(residual_csv, report)
    logger.info("GMRES: %d iterations, relative residual %.3e", report.iterations, report.final_residual)
    if not report.converged and raise_on_fail:
        raise NonConvergence(f"GMRES did not reach {tol:g} in {max_iter} iterations", report, x)
    return x, report


def write_residual_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "relres"])
        for i, r in enumerate(report.residuals):
            w.writerow([i, repr(float(r))])


# ---------------------------------------------------------------------------
# conditioning


def condition_number(system, cap=6000):
    """2-norm condition number by dense SVD."""
    if hasattr(system, "to_dense"):
        n = system.n
        if n > cap:
            raise CapExceeded(f"dimension {n} exceeds the dense cap {cap}; use an iterative estimator")
        A = system.to_dense()
    else:
        A = system.toarray() if sp.issparse(system) else np.asarray(system)
        if A.shape[0] > cap:
            raise CapExceeded(f"dimension {A.shape[0]} exceeds the dense cap {cap}; use an iterative estimator")
    s = np.linalg.svd(A, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


SWEEP_HEADER = ["freq_hz", "k_hat", "cond_unstab", "cond_stab", "iters_unstab", "iters_stab"]


def sweep_conditioning(problem, omegas, eta=1.0, solve=False, solver_options=None, cap=6000):
    """Condition numbers (and optionally GMRES iteration counts) of both formulations.

    Returns a list of dicts keyed by :data:`SWEEP_HEADER`.
    """
    from .coupling import Formulation

    rows = []
    for omega in omegas:
        amb = problem.flow.ambient.with_omega(omega)
        row = {"freq_hz": amb.frequency, "k_hat": amb.k_hat_infinity}
        for form, tag in ((Formulation.UNSTABLE, "unstab"), (Formulation.STABLE, "stab")):
            system = problem.system(omega, form, eta)
            row[f"cond_{tag}"] = condition_number(system, cap)
            iters = ""
            if solve:
                _, rep = solve_system(system, raise_on_fail=False, **(solver_options or {}))
                iters = rep.iterations
            row[f"iters_{tag}"] = iters
        logger.info("f=%.6g k_hat=%.6g cond_u=%.4g cond_s=%.4g", row["freq_hz"], row["k_hat"], row["cond_unstab"],
                    row["cond_stab"])
        rows.append(row)
    return rows


def write_sweep_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_HEADER)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
