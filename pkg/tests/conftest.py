import numpy as np
import pytest

from glauert.bem import SurfaceSpaces
from glauert.flow import AmbientState, uniform_flow
from glauert.incident import plane_wave
from glauert.mesh import ball_shell, cubed_sphere

# lines collected by the acceptance module and echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def coarse_shell():
    """Unit-sphere body inside a radius-1.5 coupling sphere (486 volume dofs)."""
    return ball_shell(1.0, 1.5, n=4, layers=2)


@pytest.fixture(scope="session")
def tiny_shell():
    return ball_shell(0.5, 1.0, n=3, layers=1)


@pytest.fixture(scope="session")
def sphere_spaces():
    p, f = cubed_sphere(4)
    return SurfaceSpaces.from_triangles(p, f)


@pytest.fixture(scope="session")
def rest_ambient():
    return AmbientState(1.0, 1.0, 0.0, 1.0)


@pytest.fixture(scope="session")
def tiny_problem(tiny_shell, rest_ambient):
    from glauert.coupling import CouplingProblem

    return CouplingProblem(tiny_shell, uniform_flow(rest_ambient), plane_wave(1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
