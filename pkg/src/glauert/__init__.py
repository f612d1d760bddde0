"""FEM-BEM coupling for acoustic scattering by a rigid body in subsonic potential flow.

The exterior problem is mapped to a Helmholtz problem by a Prandtl-Glauert
transformation; a bounded region around the body carries P1 finite elements
and the remaining unbounded region is handled by boundary integral operators.
"""
from .coupling import BlockSystem, CouplingProblem, Densities, Formulation, assemble_stable, assemble_unstable
from .estimator import ConvectedScatteringSolver
from .exceptions import *  # noqa: F401,F403
from .flow import AmbientState, sphere_dipole_flow, uniform_flow
from .incident import monopole, plane_wave
from .mesh import PGMap, TetMesh, ball_shell, build_mesh, load_gmsh, save_gmsh
from .solver import SolveReport, condition_number, gmres, solve_system

__version__ = "0.1.0"
