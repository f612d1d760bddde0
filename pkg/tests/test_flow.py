import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glauert.exceptions import ContinuityWarning, DomainError, SizeMismatchError, SupersonicError
from glauert.flow import (AmbientState, coefficients_at, nodal_flow, nodal_flow_from_file, sphere_dipole_flow,
                          transformed_coefficients, uniform_flow, write_nodal_flow)
from glauert.mesh import ball_shell, signed_volumes

mp.mp.dps = 40


def _mp_coefficients(minf, M0, k_ratio):
    """Coefficients evaluated in extended precision straight from their definitions."""
    minf = [mp.mpf(x) for x in minf]
    M0 = [mp.mpf(x) for x in M0]
    m2 = sum(x * x for x in minf)
    g = 1 / mp.sqrt(1 - m2)
    C = (g - 1) / m2
    N = mp.matrix(3, 3)
    for i in range(3):
        for j in range(3):
            N[i, j] = (1 if i == j else 0) + C * minf[i] * minf[j]
    q = g**2 * mp.mpf(k_ratio)
    P = sum(a * b for a, b in zip(M0, minf))
    beta = (1 + q * P) ** 2 - q**2 * m2
    NM = N * mp.matrix(M0)
    V = [(1 + q * P) * NM[i] - q * g * minf[i] for i in range(3)]
    O = mp.matrix(3, 3)
    for i in range(3):
        for j in range(3):
            O[i, j] = (1 if i == j else 0) - M0[i] * M0[j]
    Xi = N * O * N
    return float(beta), np.array([float(v) for v in V]), np.array([[float(Xi[i, j]) for j in range(3)]
                                                                   for i in range(3)])


def test_uniform_point_values():
    amb = AmbientState(1.2, 340.0, 0.3, 2 * np.pi * 100)
    c = coefficients_at(np.zeros((1, 3)), uniform_flow(amb))
    g = amb.pg_map.gamma_infinity
    assert abs(c.beta[0] - g**2) < 1e-14 and abs(c.beta[0] - 1.0989) < 1e-4
    np.testing.assert_allclose(c.V[0], 0.0, atol=1e-15)
    np.testing.assert_allclose(c.Xi[0], np.eye(3), atol=1e-14)


def test_rest_values():
    amb = AmbientState(1.0, 1.0, 0.0, 2.0)
    c = coefficients_at(np.zeros((1, 3)), uniform_flow(amb))
    assert c.r[0] == 1 and c.beta[0] == 1
    np.testing.assert_array_equal(c.V[0], 0.0)
    np.testing.assert_array_equal(c.Xi[0], np.eye(3))


def test_orthogonal_flow_against_extended_precision():
    amb = AmbientState(1.0, 1.0, 0.3, 1.7)
    c = transformed_coefficients([1.0], [1.0], [[0.2, 0.0, 0.0]], amb)
    beta, V, Xi = _mp_coefficients([0, 0, 0.3], [0.2, 0, 0], 1.0)
    assert abs(c.beta[0] - beta) <= 1e-12 * abs(beta)
    np.testing.assert_allclose(c.V[0], V, rtol=0, atol=1e-12)
    np.testing.assert_allclose(c.Xi[0], Xi, rtol=0, atol=1e-12)


def test_gamma_value():
    assert abs(AmbientState(1, 1, 0.3, 1).pg_map.gamma_infinity - 1 / np.sqrt(1 - 0.09)) < 1e-12
    amb = AmbientState(1, 2, 0.3, 5)
    assert amb.k_hat_infinity == amb.pg_map.gamma_infinity * amb.k_infinity


def test_proposition_bounds_many_states(rng):
    amb = AmbientState(1.0, 1.0, 0.3, 1.0)
    n = 1000
    d = rng.normal(size=(n, 3))
    M0 = d / np.linalg.norm(d, axis=1)[:, None] * 0.95 * rng.random(n)[:, None]
    c = transformed_coefficients(np.ones(n), np.ones(n), M0, amb)
    m2 = np.sum(M0**2, axis=1)
    assert np.all(np.linalg.eigvalsh(c.Xi)[:, 0] >= 1 - m2 - 1e-12)
    bound = (1 + m2) / (1 - 0.09)
    U = rng.normal(size=(n, 100, 3)) + 1j * rng.normal(size=(n, 100, 3))
    W = rng.normal(size=(n, 100, 3)) + 1j * rng.normal(size=(n, 100, 3))
    lhs = np.abs(np.einsum("nsi,nij,nsj->ns", U.conj(), c.Xi, W))
    rhs = bound[:, None] * np.linalg.norm(U, axis=2) * np.linalg.norm(W, axis=2)
    assert np.all(lhs <= rhs + 1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 0.95), st.floats(0, 0.95), st.floats(0, np.pi), st.floats(0, 2 * np.pi))
def test_xi_coercive(minf, m0, theta, phi):
    amb = AmbientState(1.0, 1.0, minf, 1.0)
    M0 = m0 * np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
    c = transformed_coefficients([1.0], [1.0], [M0], amb)
    np.testing.assert_allclose(c.Xi[0], c.Xi[0].T, atol=1e-15)
    assert np.linalg.eigvalsh(c.Xi[0])[0] >= 1 - m0**2 - 1e-12


def test_supersonic_sample_rejected():
    amb = AmbientState(1.0, 1.0, 0.3, 1.0)
    with pytest.raises(SupersonicError):
        transformed_coefficients([1.0], [1.0], [[0.0, 0.0, 0.9995]], amb)
    with pytest.raises(SupersonicError):
        AmbientState(1.0, 1.0, 1.0, 1.0)


@pytest.fixture
def dipole():
    amb = AmbientState(1.0, 1.0, 0.3, 1.0)
    return sphere_dipole_flow(0.5, (0.0, 0.0, 0.0), amb), amb


def _sample_physical(flow, amb, x):
    return flow.sample(amb.pg_map.forward(np.atleast_2d(x)))[3]


def test_dipole_stagnation_equator_decay(dipole):
    flow, amb = dipole
    minf = amb.mach_vector
    np.testing.assert_allclose(_sample_physical(flow, amb, [0, 0, -0.5])[0], 0.0, atol=1e-15)
    eq = _sample_physical(flow, amb, [0.5, 0, 0])[0]
    assert abs(np.linalg.norm(eq) - 1.5 * 0.3) < 1e-14
    assert abs(eq @ np.array([1.0, 0, 0])) < 1e-15
    far = _sample_physical(flow, amb, [0, 5.0, 0])[0]
    assert np.linalg.norm(far - minf) <= 1.5e-3 * np.linalg.norm(minf)


def test_dipole_tangency(dipole, rng):
    flow, amb = dipole
    d = rng.normal(size=(200, 3))
    n = d / np.linalg.norm(d, axis=1)[:, None]
    M = _sample_physical(flow, amb, 0.5 * n)
    np.testing.assert_allclose(np.einsum("ij,ij->i", M, n), 0.0, atol=1e-15)


def test_dipole_inside_body(dipole):
    flow, amb = dipole
    with pytest.raises(DomainError):
        _sample_physical(flow, amb, [0, 0, 0.1])


def test_coefficients_lipschitz(dipole, rng):
    flow, amb = dipole
    x = amb.pg_map.forward(rng.normal(size=(50, 3)))
    x = 0.8 * x / np.linalg.norm(x, axis=1)[:, None]
    d = rng.normal(size=(50, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    slopes = []
    for step in (1e-2, 1e-3, 1e-4):
        a = coefficients_at(x, flow)
        b = coefficients_at(x + step * d, flow)
        diff = np.abs(a.beta - b.beta) + np.linalg.norm(a.V - b.V, axis=1) + np.linalg.norm(a.Xi - b.Xi, axis=(1, 2))
        slopes.append(diff.max() / step)
    assert max(slopes) < 2 * min(slopes)


def test_nodal_ambient_matches_uniform(tiny_shell, rng):
    amb = AmbientState(1.2, 340.0, (0.0, 0.0, 0.3), 600.0)
    vals = np.tile([1.2, 340.0, 0.0, 0.0, 0.3], (tiny_shell.n_vertices, 1))
    nodal = nodal_flow(vals, tiny_shell, amb)
    x = tiny_shell.vertices[tiny_shell.tets[:40]].mean(axis=1)
    for a, b in zip(nodal.sample(x), uniform_flow(amb).sample(x)):
        np.testing.assert_allclose(a, b, rtol=1e-14)


def test_nodal_size_mismatch(tmp_path, tiny_shell):
    amb = AmbientState(1.0, 1.0, 0.0, 1.0)
    path = tmp_path / "flow.csv"
    write_nodal_flow(path, tiny_shell, uniform_flow(amb))
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(SizeMismatchError):
        nodal_flow_from_file(path, tiny_shell, amb)


def test_nodal_continuity_warning(tiny_shell):
    amb = AmbientState(1.0, 1.0, 0.0, 1.0)
    vals = np.tile([1.0, 1.0, 0.0, 0.0, 0.0], (tiny_shell.n_vertices, 1))
    vals[:, 0] = 1.5
    with pytest.warns(ContinuityWarning):
        nodal_flow(vals, tiny_shell, amb)


def test_nodal_interpolation_second_order(tmp_path):
    amb = AmbientState(1.0, 1.0, 0.3, 1.0)
    exact = sphere_dipole_flow(0.5, (0, 0, 0), amb)
    errs, hs = [], []
    for n, layers in ((4, 2), (8, 4)):
        mesh = ball_shell(0.5, 1.0, n=n, layers=layers)
        path = tmp_path / f"flow{n}.csv"
        write_nodal_flow(path, mesh, exact)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ContinuityWarning)
            interp = nodal_flow_from_file(path, mesh, amb)
        cent = mesh.vertices[mesh.tets].mean(axis=1)
        cells = np.arange(mesh.n_tets)
        got = interp.sample(cent, cells=cells, bary=np.full((mesh.n_tets, 4), 0.25))[3]
        # volume-weighted L2 norm over centroid samples
        vol = signed_volumes(mesh.vertices, mesh.tets)
        err = np.linalg.norm(got - exact.sample(cent)[3], axis=1)
        errs.append(np.sqrt(np.sum(vol * err**2) / vol.sum()))
        hs.append(mesh.summary()["mean_edge"])
    order = np.log(errs[0] / errs[1]) / np.log(hs[0] / hs[1])
    assert order >= 1.7


def test_nodal_point_location(tiny_shell):
    amb = AmbientState(1.0, 1.0, 0.0, 1.0)
    vals = np.column_stack([np.ones(tiny_shell.n_vertices), np.ones(tiny_shell.n_vertices),
                            0.1 * tiny_shell.vertices])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ContinuityWarning)
        fl = nodal_flow(vals, tiny_shell, amb)
    x = tiny_shell.vertices[tiny_shell.tets[::7]].mean(axis=1)
    np.testing.assert_allclose(fl.sample(x)[3], 0.1 * x, atol=1e-13)
