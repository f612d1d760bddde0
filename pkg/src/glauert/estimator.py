"""Estimator-style wrapper: ``fit`` on a mesh, ``predict`` exterior fields at points."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .bem import BemQuadrature
from .coupling import CouplingProblem, Formulation, solve_case
from .exceptions import EtaError
from .flow import AmbientState, sphere_dipole_flow, uniform_flow
from .incident import monopole, plane_wave
from .mesh import TetMesh, apply_prandtl_glauert
from .postprocess import pressure_from_potential, reconstruct_exterior


class ConvectedScatteringSolver(BaseEstimator):
    """Coupled FEM-BEM solver for scattering in a subsonic flow.

    Parameters
    ----------
    k_hat : float
        Transformed free-stream wavenumber.
    mach : float
        Free-stream Mach number along ``axis``.
    formulation : {"stable", "unstable"}
    eta : complex
        Coupling parameter of the stable formulation.
    incident : {"plane_wave", "monopole"}
    source : array-like of shape (3,)
        Plane-wave direction (transformed frame) or monopole position (physical frame).
    flow : {"uniform", "sphere_dipole"}
    body_radius : float
        Radius of the sphere for the dipole flow.

    Attributes
    ----------
    problem_ : CouplingProblem
    densities_ : Densities
    report_ : SolveReport
    n_iter_ : int
    """

    def __init__(self, k_hat=1.0, mach=0.0, axis=(0.0, 0.0, 1.0), rho=1.0, c=1.0, formulation="stable", eta=1.0,
                 incident="plane_wave", source=(0.0, 0.0, 1.0), amplitude=1.0, flow="uniform", body_radius=0.5,
                 tol=1e-6, max_iter=2000, preconditioner=True, fem_degree=2, bem_singular_order=4):
        self.k_hat = k_hat
        self.mach = mach
        self.axis = axis
        self.rho = rho
        self.c = c
        self.formulation = formulation
        self.eta = eta
        self.incident = incident
        self.source = source
        self.amplitude = amplitude
        self.flow = flow
        self.body_radius = body_radius
        self.tol = tol
        self.max_iter = max_iter
        self.preconditioner = preconditioner
        self.fem_degree = fem_degree
        self.bem_singular_order = bem_singular_order

    def _ambient(self):
        axis = np.asarray(self.axis, dtype=float)
        m = self.mach * axis / np.linalg.norm(axis)
        base = AmbientState(self.rho, self.c, tuple(m), 1.0)
        return base.with_omega(self.k_hat * self.c / base.pg_map.gamma_infinity)

    def fit(self, X, y=None):
        """Assemble and solve on the physical-frame mesh ``X``."""
        if not isinstance(X, TetMesh):
            raise TypeError("fit expects a TetMesh")
        form = Formulation(self.formulation)
        if form is Formulation.STABLE and complex(self.eta).real == 0:
            raise EtaError("the coupling parameter must have a nonzero real part")
        amb = self._ambient()
        pg = amb.pg_map
        mesh = apply_prandtl_glauert(X, pg)
        flow = uniform_flow(amb) if self.flow == "uniform" else sphere_dipole_flow(self.body_radius, (0, 0, 0), amb)
        if self.incident == "monopole":
            inc = monopole(amb.k_hat_infinity, pg.forward(np.asarray(self.source, dtype=float)), self.amplitude)
        else:
            inc = plane_wave(amb.k_hat_infinity, self.source, self.amplitude)
        quad = BemQuadrature(singular_order=self.bem_singular_order)
        self.problem_ = CouplingProblem(mesh, flow, inc, self.fem_degree, quad)
        system = self.problem_.system(amb.omega, form, self.eta)
        self.densities_, self.report_ = solve_case(
            system, {"tol": self.tol, "max_iter": self.max_iter, "preconditioner": self.preconditioner})
        self.n_iter_ = self.report_.iterations
        self.ambient_ = amb
        return self

    def predict(self, X):
        """Total transformed potential at physical-frame points ``X`` of shape (n, 3)."""
        return self._probe(X).f

    def predict_scattered(self, X):
        return self._probe(X).f_sc

    def predict_pressure(self, X):
        probe = self._probe(X)
        return pressure_from_potential(probe.f, probe.grad_f, self.ambient_)

    def _probe(self, X):
        check_is_fitted(self, "densities_")
        X = check_array(X, dtype=float, ensure_min_samples=0)
        if X.shape[1] != 3:
            raise ValueError(f"expected points with 3 coordinates, got {X.shape[1]}")
        inc = self.problem_.parts(self.ambient_.omega)[3]
        return reconstruct_exterior(self.problem_.spaces, self.densities_, inc, self.ambient_.pg_map.forward(X))
