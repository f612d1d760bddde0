"""Analytic incident fields in the transformed frame."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import SingularPointError
from .quadrature import triangle_rule


class IncidentKind(enum.Enum):
    MONOPOLE = "monopole"
    PLANE_WAVE = "plane_wave"


@dataclass(frozen=True)
class IncidentField:
    """Monopole ``A exp(ik|x - xs|) / (4 pi |x - xs|)`` or plane wave ``A exp(ik d.x)``.

    ``k`` is the transformed wavenumber.  ``vector`` holds the source point
    (monopole) or the propagation direction (plane wave, normalised here).
    """

    kind: IncidentKind
    k: float
    vector: tuple = (0.0, 0.0, 1.0)
    amplitude: complex = 1.0

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=float).reshape(3)
        if self.kind is IncidentKind.PLANE_WAVE:
            nv = np.linalg.norm(v)
            if nv == 0:
                raise ValueError("plane-wave direction must be nonzero")
            v = v / nv
        object.__setattr__(self, "vector", tuple(float(x) for x in v))
        object.__setattr__(self, "amplitude", complex(self.amplitude))

    def with_k(self, k):
        return IncidentField(self.kind, k, self.vector, self.amplitude)

    def _dist(self, x):
        d = np.atleast_2d(x) - np.asarray(self.vector)
        r = np.linalg.norm(d, axis=1)
        if np.any(r == 0):
            raise SingularPointError("incident field evaluated at the monopole position")
        return d, r

    def value(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        A, k = self.amplitude, self.k
        if self.kind is IncidentKind.PLANE_WAVE:
            return A * np.exp(1j * k * (x @ np.asarray(self.vector)))
        _, r = self._dist(x)
        return A * np.exp(1j * k * r) / (4 * np.pi * r)

    def gradient(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        A, k = self.amplitude, self.k
        if self.kind is IncidentKind.PLANE_WAVE:
            dvec = np.asarray(self.vector)
            return (1j * k * self.value(x))[:, None] * dvec
        d, r = self._dist(x)
        e = A * np.exp(1j * k * r) / (4 * np.pi * r)
        return (e * (1j * k - 1.0 / r) / r)[:, None] * d


def monopole(k, position, amplitude=1.0):
    return IncidentField(IncidentKind.MONOPOLE, k, position, amplitude)


def plane_wave(k, direction=(0.0, 0.0, 1.0), amplitude=1.0):
    return IncidentField(IncidentKind.PLANE_WAVE, k, direction, amplitude)


def eval_incident(field, x):
    return field.value(x)


def eval_incident_gradient(field, x):
    return field.gradient(x)


@dataclass(frozen=True, eq=False)
class IncidentTraces:
    """Traces of the incident field on the coupling surface.

    ``dirichlet_vertices`` : values at surface vertices.
    ``rhs_p0`` : ``int f_inc psi_i``.
    ``rhs_p1_neumann`` : ``int (grad f_inc . n) xi_i``.
    ``neumann_p0`` : ``int (grad f_inc . n) psi_i``.
    """

    dirichlet_vertices: np.ndarray
    rhs_p0: np.ndarray
    rhs_p1_neumann: np.ndarray
    neumann_p0: np.ndarray


def incident_traces(field, spaces, degree=5):
    bary, w = triangle_rule(degree)
    x = np.einsum("qa,fad->fqd", bary, spaces.vertices[spaces.faces]).reshape(-1, 3)
    nq = len(w)
    wa = (spaces.areas[:, None] * w[None, :])
    f = field.value(x).reshape(spaces.q, nq)
    g = np.einsum("pd,pd->p", field.gradient(x), np.repeat(spaces.normals, nq, axis=0)).reshape(spaces.q, nq)
    rhs_p0 = (wa * f).sum(axis=1)
    neu_p0 = (wa * g).sum(axis=1)
    loc = np.einsum("fq,qa->fa", wa * g, bary)
    rhs_p1 = np.bincount(spaces.faces.ravel(), weights=loc.real.ravel(), minlength=spaces.r) + \
        1j * np.bincount(spaces.faces.ravel(), weights=loc.imag.ravel(), minlength=spaces.r)
    return IncidentTraces(field.value(spaces.vertices), rhs_p0, rhs_p1, neu_p0)
