"""Surface Laplace-Beltrami plus mass form used by the stabilised coupling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import DegenerateFaceError


@dataclass(frozen=True, eq=False)
class SurfaceP1Form:
    """``matrix = stiffness + mass`` on the P1 surface space (real symmetric CSR)."""

    matrix: sp.csr_matrix
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix

    def apply_inverse(self, g):
        """Discrete ``(-Lap + I)^{-1}`` of a nodal function ``g``: solve ``matrix p = mass g``."""
        from scipy.sparse.linalg import spsolve

        return spsolve(self.matrix.tocsc(), self.mass @ g)


def assemble_delta_form(spaces):
    """Assemble ``int grad_G xi_j . grad_G xi_i + int xi_j xi_i`` with flat-facet gradients."""
    if np.any(spaces.areas <= 0):
        raise DegenerateFaceError("surface contains zero-area triangles")
    G = spaces.surface_gradients()
    loc = spaces.areas[:, None, None] * np.einsum("fad,fbd->fab", G, G)
    rows = np.repeat(spaces.faces, 3, axis=1).ravel()
    cols = np.tile(spaces.faces, (1, 3)).ravel()
    K = sp.csr_matrix((loc.ravel(), (rows, cols)), shape=(spaces.r, spaces.r))
    K = 0.5 * (K + K.T)
    M = spaces.mass_p1_p1()
    M = 0.5 * (M + M.T)
    return SurfaceP1Form(matrix=(K + M).tocsr(), stiffness=K.tocsr(), mass=M.tocsr())
