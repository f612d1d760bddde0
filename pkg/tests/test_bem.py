import numpy as np
import pytest

from glauert.bem import (BemQuadrature, HelmholtzKernel, SurfaceSpaces, assemble_adjoint_double_layer,
                         assemble_double_layer, assemble_hypersingular, assemble_operators, assemble_single_layer,
                         evaluate_potentials)
from glauert.exceptions import DegenerateFaceError, NearSurfaceError
from glauert.incident import incident_traces, monopole
from glauert.mesh import cubed_sphere
from glauert.quadrature import triangle_rule

from oracles import constant_triangle_potential


def _sphere(n, radius=1.0):
    p, f = cubed_sphere(n)
    return SurfaceSpaces.from_triangles(radius * p, f)


def _collapsed_gauss(tri, n=24):
    """Tensor Gauss-Legendre on the unit square mapped onto a triangle (Duffy)."""
    t, w = np.polynomial.legendre.leggauss(n)
    t, w = 0.5 * (t + 1), 0.5 * w
    U, V = np.meshgrid(t, t, indexing="ij")
    W = np.outer(w, w) * U
    a, b = U * (1 - V), U * V
    v = np.asarray(tri)
    area = 0.5 * np.linalg.norm(np.cross(v[1] - v[0], v[2] - v[0]))
    pts = v[0] + a[..., None] * (v[1] - v[0]) + b[..., None] * (v[2] - v[0])
    return pts.reshape(-1, 3), (2 * area * W).ravel()


def test_kernel_satisfies_helmholtz(rng):
    k = 2.3
    ker = HelmholtzKernel(k)
    x = rng.normal(size=(20, 3))
    h = 1e-3
    lap = -6 * ker.value(x)
    for d in np.eye(3):
        lap += ker.value(x + h * d) + ker.value(x - h * d)
    lap /= h**2
    assert np.all(np.abs(lap + k**2 * ker.value(x)) <= 1e-4 * np.abs(ker.value(x)) * k**2)


def test_kernel_gradient_and_hessian(rng):
    ker = HelmholtzKernel(1.7)
    x = rng.normal(size=(10, 3)) + 2.0
    h = 1e-6
    fd = np.stack([(ker.value(x + h * d) - ker.value(x - h * d)) / (2 * h) for d in np.eye(3)], axis=1)
    np.testing.assert_allclose(ker.gradient(x), fd, rtol=1e-7)
    fdH = np.stack([(ker.gradient(x + h * d) - ker.gradient(x - h * d)) / (2 * h) for d in np.eye(3)], axis=2)
    np.testing.assert_allclose(ker.hessian(x), fdH, rtol=1e-6)


def test_distant_coplanar_panels():
    # k * diam small, so the leading far-field term is accurate to about 1e-4
    k = 1.5
    tri = np.array([[0, 0, 0], [0.05, 0, 0], [0, 0.05, 0]], float)
    d = 10.0
    verts = np.vstack([tri, tri + [d, 0, 0]])
    sp_ = SurfaceSpaces.from_triangles(verts, np.array([[0, 1, 2], [3, 4, 5]]))
    S = assemble_single_layer(sp_, HelmholtzKernel(k))
    X, wx = _collapsed_gauss(verts[:3], 12)
    Y, wy = _collapsed_gauss(verts[3:], 12)
    brute = wx @ HelmholtzKernel(k).value(X[:, None] - Y[None]) @ wy
    far = sp_.areas[0] * sp_.areas[1] * np.exp(1j * k * d) / (4 * np.pi * d)
    assert abs(S[0, 1] - brute) <= 1e-6 * abs(brute)
    assert abs(S[0, 1] - far) <= 1e-3 * abs(far)


def test_singular_pairs_against_closed_form():
    # Laplace single layer entries for coincident, edge and vertex pairs
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.2], [-0.8, -0.3, 0.4]], float)
    faces = np.array([[0, 1, 2], [1, 3, 2], [0, 2, 4]])
    sp_ = SurfaceSpaces.from_triangles(verts, faces)
    S = assemble_single_layer(sp_, HelmholtzKernel(0.0))
    S8 = assemble_single_layer(sp_, HelmholtzKernel(0.0), BemQuadrature(singular_order=8))
    for i, j in ((0, 0), (0, 1), (0, 2), (1, 2)):
        X, wx = _collapsed_gauss(verts[faces[i]], 60)
        ref = sum(w * constant_triangle_potential(x, verts[faces[j]]) for x, w in zip(X, wx))
        assert abs(S[i, j] - ref) <= 5e-4 * abs(ref), (i, j)
        assert abs(S8[i, j] - ref) <= 1e-6 * abs(ref), (i, j)


def test_single_layer_symmetric_and_capacity():
    sp_ = _sphere(6)  # 432 faces
    ops = assemble_operators(sp_, HelmholtzKernel(0.0))
    assert np.array_equal(ops.S, ops.S.T)
    pot = (ops.S @ np.ones(sp_.q)) / sp_.areas
    assert np.abs(pot - 1.0).max() <= 0.03


def test_gauss_double_layer(sphere_spaces):
    D = assemble_double_layer(sphere_spaces, HelmholtzKernel(0.0))
    g = D @ np.ones(sphere_spaces.r)
    assert np.abs(g / sphere_spaces.areas + 0.5).max() <= 1e-3


def test_hypersingular_kills_constants(sphere_spaces):
    N = assemble_hypersingular(sphere_spaces, HelmholtzKernel(0.0))
    assert np.linalg.norm(N @ np.ones(sphere_spaces.r)) <= 1e-10 * np.linalg.norm(N)
    np.testing.assert_allclose(N, N.T, atol=1e-15 * np.abs(N).max())


def test_adjoint_is_transpose(sphere_spaces):
    ker = HelmholtzKernel(2.0)
    D = assemble_double_layer(sphere_spaces, ker)
    Dt = assemble_adjoint_double_layer(sphere_spaces, ker)
    assert np.array_equal(Dt, D.T)
    assert np.all(np.isfinite(D))


def test_operators_continuous_in_k(sphere_spaces):
    a = assemble_operators(sphere_spaces, HelmholtzKernel(2.0))
    b = assemble_operators(sphere_spaces, HelmholtzKernel(2.0 + 1e-6))
    for name in ("S", "D", "N"):
        A, B = getattr(a, name), getattr(b, name)
        assert np.all(np.isfinite(B))
        assert np.linalg.norm(A - B) <= 1e-4 * np.linalg.norm(A)


def _calderon_residuals(n, k, y0):
    sp_ = _sphere(n)
    ops = assemble_operators(sp_, HelmholtzKernel(k))
    tr = incident_traces(monopole(k, y0), sp_)
    g0, g1 = tr.dirichlet_vertices, tr.neumann_p0 / sp_.areas
    M = sp_.mass_p0_p1()
    r1 = (ops.D - 0.5 * M) @ g0 - ops.S @ g1
    r2 = ops.N @ g0 + (ops.Dt + 0.5 * M.T) @ g1
    h = sp_.diameters.mean()
    return h, np.linalg.norm(r1) / np.linalg.norm(0.5 * M @ g0), np.linalg.norm(r2) / np.linalg.norm(0.5 * M.T @ g1)


def test_calderon_point_source_refinement():
    y0 = np.array([0.1, 0.2, -0.1])
    h0, a0, b0 = _calderon_residuals(3, 2.0, y0)
    h1, a1, b1 = _calderon_residuals(4, 2.0, y0)
    assert np.log(a0 / a1) / np.log(h0 / h1) >= 0.8
    assert np.log(b0 / b1) / np.log(h0 / h1) >= 0.8


def test_zero_densities(sphere_spaces):
    pts = np.array([[0, 0, 3.0], [2, 2, 2]])
    out = evaluate_potentials(sphere_spaces, np.zeros(sphere_spaces.q), np.zeros(sphere_spaces.r), pts, 1.0)
    assert np.all(out == 0)


def test_green_representation_refinement():
    k, y0 = 1.5, np.array([0.2, -0.1, 0.15])
    src = monopole(k, y0)
    pts = np.array([[0, 0, 2.5], [2.0, 1.0, -1.0], [-1.5, -1.5, 0.5]])
    errs, hs = [], []
    for n in (4, 8):
        sp_ = _sphere(n)
        tr = incident_traces(src, sp_)
        f = evaluate_potentials(sp_, tr.neumann_p0 / sp_.areas, tr.dirichlet_vertices, pts, k)
        exact = src.value(pts)
        errs.append(np.linalg.norm(f - exact) / np.linalg.norm(exact))
        hs.append(sp_.diameters.mean())
    assert errs[1] < 0.05
    assert np.log(errs[0] / errs[1]) / np.log(hs[0] / hs[1]) >= 0.8


def test_double_layer_jump():
    # Laplace double layer of mu = z on the unit sphere: inside -(2/3) r cos t, outside (1/3) r^-2 cos t
    sp_ = _sphere(8)
    mu = sp_.vertices[:, 2]
    h = sp_.diameters
    sel = np.argsort(-np.abs(sp_.centroids[:, 2]))[:20]
    c = sp_.centroids[sel] / np.linalg.norm(sp_.centroids[sel], axis=1)[:, None]
    d = 0.05
    # evaluation beyond the guarded band, so the check is switched off here
    plus = evaluate_potentials(sp_, np.zeros(sp_.q), mu, (1 + d) * c, 0.0, degree=20, check=False)
    minus = evaluate_potentials(sp_, np.zeros(sp_.q), mu, (1 - d) * c, 0.0, degree=20, check=False)
    jump = plus - minus
    assert np.abs(jump - c[:, 2]).max() <= 0.1 * np.abs(c[:, 2]).max()
    exact = (1 / 3) * (1 + d) ** -2 * c[:, 2] + (2 / 3) * (1 - d) * c[:, 2]
    np.testing.assert_allclose(jump.real, exact, atol=0.02)
    # constant density: exact unit jump for the Laplace kernel on a closed surface
    far = 5 * h.max()
    one = np.ones(sp_.r)
    j1 = (evaluate_potentials(sp_, np.zeros(sp_.q), one, [[0, 0, 1 + far]], 0.0)
          - evaluate_potentials(sp_, np.zeros(sp_.q), one, [[0, 0, 0.0]], 0.0, check=False))
    assert abs(j1[0] - 1.0) <= 1e-3


def test_near_surface_refused(sphere_spaces):
    with pytest.raises(NearSurfaceError) as info:
        evaluate_potentials(sphere_spaces, np.zeros(sphere_spaces.q), np.zeros(sphere_spaces.r),
                            [[0, 0, 1.01], [0, 0, 4.0]], 1.0)
    assert info.value.indices == [0]


def test_degenerate_face():
    with pytest.raises(DegenerateFaceError):
        SurfaceSpaces.from_triangles(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]]), np.array([[0, 1, 2]]))


def test_surface_masses(sphere_spaces):
    M01 = sphere_spaces.mass_p0_p1()
    M11 = sphere_spaces.mass_p1_p1()
    one = np.ones(sphere_spaces.r)
    assert abs(np.ones(sphere_spaces.q) @ M01 @ one - sphere_spaces.areas.sum()) < 1e-12
    assert abs(one @ M11 @ one - sphere_spaces.areas.sum()) < 1e-12
    _, w = triangle_rule(4)
    assert abs(w.sum() - 1.0) < 1e-14


def test_quadrature_settings_agree(sphere_spaces):
    ker = HelmholtzKernel(1.0)
    a = assemble_operators(sphere_spaces, ker)
    b = assemble_operators(sphere_spaces, ker, BemQuadrature(singular_order=6, regular_degree=8, near_degree=10))
    assert np.linalg.norm(a.S - b.S) <= 1e-3 * np.linalg.norm(b.S)
    assert np.linalg.norm(a.N - b.N) <= 1e-3 * np.linalg.norm(b.N)
