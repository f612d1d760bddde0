"""Quadrature rules on triangles, tetrahedra and triangle pairs.

Triangle rules live on the reference triangle ``{(s, t): 0 <= t <= s <= 1}``
with the affine map ``x = P0 + s (P1 - P0) + t (P2 - P1)``, whose barycentric
coordinates are ``(1 - s, s - t, t)``.  Weights of single-triangle rules are
normalised to sum to one (multiply by the physical area).

The singular pair rules follow the relative-coordinate construction of
Sauter and Schwab.  Each pair rule returns points on the reference triangle
for both panels and weights that sum to ``1/4`` (the product of the reference
areas), so a physical double integral is ``(2 A_x)(2 A_y) sum(w k(x, y))``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = [
    "triangle_rule",
    "tetrahedron_rule",
    "gauss_01",
    "pair_rule",
    "reference_to_barycentric",
    "COINCIDENT",
    "EDGE",
    "VERTEX",
    "REGULAR",
]

COINCIDENT, EDGE, VERTEX, REGULAR = 3, 2, 1, 0


def gauss_01(n):
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _jacobi_01(n, alpha):
    # weight (1 - x)^alpha on [0, 1]
    x, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1)


def _sym_points(a):
    return [(a, a, 1 - 2 * a), (a, 1 - 2 * a, a), (1 - 2 * a, a, a)]


@lru_cache(maxsize=None)
def triangle_rule(degree=4):
    """Symmetric triangle rule returning ``(barycentric (n, 3), weights (n,))``.

    Degrees 1, 2, 4 and 5 use the classical 1/3/6/7-point rules; other
    degrees fall back to a collapsed Gauss-Jacobi product rule.
    """
    if degree <= 1:
        bary = np.array([[1 / 3, 1 / 3, 1 / 3]])
        w = np.array([1.0])
    elif degree == 2:
        bary = np.array(_sym_points(1 / 6))
        w = np.full(3, 1 / 3)
    elif degree in (3, 4):
        a, wa = 0.445948490915965, 0.223381589678011
        b, wb = 0.091576213509771, 0.109951743655322
        bary = np.array(_sym_points(a) + _sym_points(b))
        w = np.array([wa] * 3 + [wb] * 3)
    elif degree == 5:
        s15 = np.sqrt(15.0)
        a1, a2 = (6 - s15) / 21, (6 + s15) / 21
        bary = np.array([(1 / 3, 1 / 3, 1 / 3)] + _sym_points(a1) + _sym_points(a2))
        w = np.array([9 / 40] + [(155 - s15) / 1200] * 3 + [(155 + s15) / 1200] * 3)
    else:
        n = degree // 2 + 1
        u, wu = _jacobi_01(n, 1.0)
        v, wv = gauss_01(n)
        U, V = np.meshgrid(u, v, indexing="ij")
        W = np.outer(wu, wv)
        # x = u, y = v (1 - u) on the unit right triangle
        l1, l2 = U.ravel(), (V * (1 - U)).ravel()
        bary = np.column_stack([1 - l1 - l2, l1, l2])
        w = 2.0 * W.ravel()
    bary.setflags(write=False)
    w = np.asarray(w, dtype=float)
    w.setflags(write=False)
    return bary, w


@lru_cache(maxsize=None)
def tetrahedron_rule(degree=2):
    """Tetrahedron rule returning ``(barycentric (n, 4), weights (n,))``.

    Weights sum to one.  Degree 2 is the 4-point rule; higher degrees use a
    collapsed Gauss-Jacobi product rule (27 points for degree 5).
    """
    if degree <= 1:
        bary = np.full((1, 4), 0.25)
        w = np.array([1.0])
    elif degree == 2:
        a, b = 0.5854101966249685, 0.1381966011250105
        bary = np.full((4, 4), b)
        np.fill_diagonal(bary, a)
        w = np.full(4, 0.25)
    else:
        n = (degree + 2) // 2
        u, wu = _jacobi_01(n, 2.0)
        v, wv = _jacobi_01(n, 1.0)
        t, wt = gauss_01(n)
        U, V, T = np.meshgrid(u, v, t, indexing="ij")
        W = wu[:, None, None] * wv[None, :, None] * wt[None, None, :]
        x = U
        y = V * (1 - U)
        z = T * (1 - U) * (1 - V)
        bary = np.column_stack([(1 - x - y - z).ravel(), x.ravel(), y.ravel(), z.ravel()])
        w = 6.0 * W.ravel()
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w


def reference_to_barycentric(st):
    """Map reference points ``(s, t)`` to barycentric ``(1 - s, s - t, t)``."""
    st = np.asarray(st)
    s, t = st[..., 0], st[..., 1]
    return np.stack([1 - s, s - t, t], axis=-1)


def _grid4(n):
    x, w = gauss_01(n)
    g = np.meshgrid(x, x, x, x, indexing="ij")
    wg = np.einsum("i,j,k,l->ijkl", w, w, w, w)
    return [a.ravel() for a in g], wg.ravel()


def _coincident(n):
    (xi, e1, e2, e3), w = _grid4(n)
    jac = w * xi**3 * e1**2 * e2
    maps = [
        ((xi, xi * (1 - e1 + e1 * e2)), (xi * (1 - e1 * e2 * e3), xi * (1 - e1))),
        ((xi, xi * e1 * (1 - e2 + e2 * e3)), (xi * (1 - e1 * e2), xi * e1 * (1 - e2))),
        ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * (1 - e2))),
    ]
    xs, ys, ws = [], [], []
    for a, b in maps:
        # each region and its mirror image under x <-> y
        for p, q in ((a, b), (b, a)):
            xs.append(np.column_stack(p))
            ys.append(np.column_stack(q))
            ws.append(jac)
    return np.vstack(xs), np.vstack(ys), np.concatenate(ws)


def _edge(n):
    (xi, e1, e2, e3), w = _grid4(n)
    j1 = w * xi**3 * e1**2
    j2 = w * xi**3 * e1**2 * e2
    regions = [
        ((xi, xi * e1 * e3), (xi * (1 - e1 * e2), xi * e1 * (1 - e2)), j1),
        ((xi, xi * e1), (xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), j2),
        ((xi * (1 - e1 * e2), xi * e1 * (1 - e2)), (xi, xi * e1 * e2 * e3), j2),
        ((xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), (xi, xi * e1), j2),
        ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * e2), j2),
    ]
    xs = np.vstack([np.column_stack(a) for a, _, _ in regions])
    ys = np.vstack([np.column_stack(b) for _, b, _ in regions])
    ws = np.concatenate([j for _, _, j in regions])
    # symmetrise so that swapping the panels reproduces the same rule
    return np.vstack([xs, ys]), np.vstack([ys, xs]), 0.5 * np.concatenate([ws, ws])


def _vertex(n):
    (xi, e1, e2, e3), w = _grid4(n)
    jac = w * xi**3 * e2
    a = np.column_stack([xi, xi * e1])
    b = np.column_stack([xi * e2, xi * e2 * e3])
    return np.vstack([a, b]), np.vstack([b, a]), np.concatenate([jac, jac])


def _regular(degree):
    bary, w = triangle_rule(degree)
    # barycentric (1 - s, s - t, t) -> (s, t)
    st = np.column_stack([1 - bary[:, 0], bary[:, 2]])
    X = np.repeat(st, len(w), axis=0)
    Y = np.tile(st, (len(w), 1))
    W = np.outer(w, w).ravel() * 0.25
    return X, Y, W


@lru_cache(maxsize=None)
def pair_rule(relation, order):
    """Quadrature for a pair of reference triangles.

    Parameters
    ----------
    relation : int
        One of ``COINCIDENT``, ``EDGE``, ``VERTEX`` or ``REGULAR``.  For
        ``EDGE`` both panels must be ordered so that their local vertices
        0 and 1 coincide (in that order); for ``VERTEX`` local vertex 0 is
        the shared one.
    order : int
        Gauss points per direction of the 4D cube for the singular rules,
        triangle degree for the regular rule.

    Returns
    -------
    x_bary, y_bary, weights
        Barycentric coordinates of the points on each panel and weights
        summing to 1/4.
    """
    if relation == COINCIDENT:
        X, Y, W = _coincident(order)
    elif relation == EDGE:
        X, Y, W = _edge(order)
    elif relation == VERTEX:
        X, Y, W = _vertex(order)
    elif relation == REGULAR:
        X, Y, W = _regular(order)
    else:
        raise ValueError(f"unknown panel relation {relation!r}")
    out = (reference_to_barycentric(X), reference_to_barycentric(Y), W)
    for a in out:
        a.setflags(write=False)
    return out
