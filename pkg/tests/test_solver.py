import csv
import warnings

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from glauert.exceptions import CapExceeded, NonConvergence, RankError
from glauert.solver import (BlockPreconditioner, condition_number, face_pattern, gmres, solve_system, spai,
                            sweep_conditioning, vertex_pattern, write_residual_csv, write_sweep_csv, SWEEP_HEADER)

from oracles import dense_svd_condition


def _random_system(rng, n=50, shift=8.0):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) + shift * np.eye(n) * np.sqrt(n) / 4
    b = rng.normal(size=n) + 1j * rng.normal(size=n)
    return A, b


def _graded_tridiagonal(rng, n=200):
    d = np.logspace(0, 3, n) * np.exp(1j * rng.uniform(-0.3, 0.3, n))
    off = 0.3 * np.minimum(np.abs(d[:-1]), np.abs(d[1:]))
    A = np.diag(d) + np.diag(off * rng.choice([-1, 1], n - 1), 1) + np.diag(off * rng.choice([-1, 1], n - 1), -1)
    A += 1e-3 * rng.normal(size=(n, n))
    return A


def test_identity_one_iteration(rng):
    b = rng.normal(size=7) + 1j
    x, rep = gmres(np.eye(7), b)
    assert rep.iterations == 1 and rep.converged
    np.testing.assert_allclose(x, b, rtol=1e-14)


def test_matches_dense_lu(rng):
    for _ in range(5):
        A, b = _random_system(rng)
        x, rep = gmres(A, b, tol=1e-13)
        ref = scipy.linalg.lu_solve(scipy.linalg.lu_factor(A), b)
        assert np.linalg.norm(x - ref) <= 1e-10 * np.linalg.norm(ref)


def test_residual_history_and_true_residual(rng):
    A, b = _random_system(rng, 80, shift=2.0)
    P = spai(A, sp.diags([np.ones(80)], [0]))
    for M in (None, P.__matmul__):
        x, rep = gmres(A, b, precond=M, tol=1e-9)
        r = np.array(rep.residuals)
        assert np.all(np.diff(r) <= 1e-12)
        assert abs(rep.true_residual - rep.final_residual) <= 1e-12
        assert abs(np.linalg.norm(b - A @ x) / np.linalg.norm(b) - rep.true_residual) <= 1e-15


def test_zero_rhs(rng):
    x, rep = gmres(np.eye(3) * 2, np.zeros(3))
    assert rep.iterations == 0 and np.all(x == 0)


def test_deterministic(rng):
    A, b = _random_system(rng)
    x1, r1 = gmres(A, b)
    x2, r2 = gmres(A, b)
    assert np.array_equal(x1, x2) and r1.residuals == r2.residuals


def test_nonconvergence_carries_report(tiny_problem):
    system = tiny_problem.system(1.0, "unstable")
    with pytest.raises(NonConvergence) as info:
        solve_system(system, max_iter=3)
    assert info.value.report.iterations == 3 and len(info.value.report.residuals) == 4
    assert info.value.solution.shape == (system.n,)


def test_spai_diagonal_exact():
    d = np.array([2.0, -4.0, 0.5 + 1j, 8.0])
    P = spai(np.diag(d), sp.identity(4))
    np.testing.assert_allclose(P.toarray(), np.diag(1 / d), rtol=1e-14)


def test_spai_pattern_optimal(rng):
    A = _graded_tridiagonal(rng, 60)
    pattern = sp.diags([np.ones(59), np.ones(60), np.ones(59)], [-1, 0, 1]) + sp.diags([np.ones(57)], [3])
    P = spai(A, pattern).toarray()
    mask = sp.csr_matrix(pattern).toarray() != 0
    Asp = np.where(mask, A, 0)
    Z = np.where(mask, np.linalg.inv(Asp), 0)
    I = np.eye(60)
    for j in range(60):
        assert np.linalg.norm(Asp @ P[:, j] - I[:, j]) <= np.linalg.norm(Asp @ Z[:, j] - I[:, j]) + 1e-12
    assert np.all(P[~mask] == 0)


def test_spai_reduces_iterations(rng):
    A = _graded_tridiagonal(rng)
    b = rng.normal(size=len(A)) + 0j
    tri = sp.diags([np.ones(len(A) - 1), np.ones(len(A)), np.ones(len(A) - 1)], [-1, 0, 1])
    P = spai(A, tri)
    _, plain = gmres(A, b, tol=1e-8)
    _, prec = gmres(A, b, precond=P.__matmul__, tol=1e-8)
    assert plain.converged and prec.converged
    assert plain.iterations >= 2 * prec.iterations


def test_spai_rank_deficient():
    A = np.array([[1.0, 1.0, 0], [1.0, 1.0, 0], [0, 0, 3.0]])
    pattern = np.array([[1, 1, 0], [1, 1, 0], [0, 0, 1]])
    with pytest.raises(RankError):
        spai(A, pattern, strict=True)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        P = spai(A, pattern)
    assert any("rank-deficient" in str(x.message) for x in w)
    assert P[0, 0] == 1.0 and P[2, 2] == pytest.approx(1 / 3)


def test_condition_number_basic(rng):
    assert condition_number(np.eye(5)) == pytest.approx(1.0, abs=1e-14)
    assert condition_number(np.diag([1.0, 10.0])) == pytest.approx(10.0, rel=1e-14)
    A = rng.normal(size=(30, 30)) + 1j * rng.normal(size=(30, 30))
    assert condition_number(A) == pytest.approx(dense_svd_condition(A), rel=1e-8)
    with pytest.raises(CapExceeded):
        condition_number(np.eye(20), cap=10)


def test_block_operator_columns(tiny_problem):
    system = tiny_problem.system(1.0, "stable")
    A = system.to_dense()
    for j in (0, system.offsets[1], system.offsets[2] + 3, system.n - 1):
        e = np.zeros(system.n)
        e[j] = 1
        np.testing.assert_allclose(system.matvec(e), A[:, j], rtol=0, atol=1e-14 * np.abs(A).max())


def test_block_preconditioner_linear(tiny_problem, rng):
    system = tiny_problem.system(1.0, "stable")
    M = BlockPreconditioner(system)
    u, v = rng.normal(size=(2, system.n)) + 1j * rng.normal(size=(2, system.n))
    a = 0.3 - 2j
    np.testing.assert_allclose(M(u + a * v), M(u) + a * M(v), rtol=0, atol=1e-12 * np.abs(M(u)).max())
    assert np.array_equal(M(u), M(u))


def test_patterns(sphere_spaces):
    fp = face_pattern(sphere_spaces, 1)
    vp = vertex_pattern(sphere_spaces, 1)
    assert fp.shape == (sphere_spaces.q,) * 2 and vp.shape == (sphere_spaces.r,) * 2
    assert np.all(fp.diagonal() == 1) and (fp != fp.T).nnz == 0
    assert face_pattern(sphere_spaces, 2).nnz > fp.nnz


def test_preconditioner_helps(tiny_problem):
    system = tiny_problem.system(1.0, "stable")
    _, plain = solve_system(system, preconditioner=False)
    _, prec = solve_system(system)
    assert prec.iterations < plain.iterations


def test_residual_csv(tmp_path, rng):
    A, b = _random_system(rng)
    _, rep = gmres(A, b)
    write_residual_csv(tmp_path / "r.csv", rep)
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["iter", "relres"] and len(rows) == len(rep.residuals) + 1


def test_sweep_single_frequency(tmp_path, tiny_problem):
    rows = sweep_conditioning(tiny_problem, [1.0])
    write_sweep_csv(tmp_path / "s.csv", rows)
    out = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert len(out) == 1 and list(out[0]) == SWEEP_HEADER
    assert float(out[0]["cond_unstab"]) > 1 and float(out[0]["cond_stab"]) > 1


def test_fine_sweep_finds_higher_peak(tiny_problem):
    # sampling too coarsely misses the narrow resonance peak
    coarse = np.linspace(0.9 * np.pi, 1.1 * np.pi, 5)
    fine = np.linspace(0.9 * np.pi, 1.1 * np.pi, 41)
    peak = lambda grid: max(r["cond_unstab"] for r in sweep_conditioning(tiny_problem, grid))
    assert peak(fine) > peak(coarse)
