import numpy as np
import pytest

from hydroelastic.fe import build_fespace
from hydroelastic.forms import FieldSpaces
from hydroelastic.mesh import BathymetryProfile, GeometryConfig, build_structured_mesh


def make_spaces(geom, nx, nz, r_phi, r_eta=None, grading=1.0):
    mesh = build_structured_mesh(geom, nx, nz, grading)
    re = r_phi if r_eta is None else r_eta
    return mesh, FieldSpaces(build_fespace(mesh, "volume", r_phi), build_fespace(mesh, "free_surface", re),
                             build_fespace(mesh, "structure", max(re, 2)))


@pytest.fixture
def periodic_geometry():
    return GeometryConfig(2 * np.pi, BathymetryProfile.constant(1.0), (0.0, 2 * np.pi), periodic=True)


@pytest.fixture
def jointed_geometry():
    """Free surface, two beam segments split by a joint, free surface; damping at both ends."""
    return GeometryConfig(4.0, BathymetryProfile.linear_ramp(2.0, 1.0, 1.0, 3.0), (1.0, 3.0), (2.0,),
                          damping_inlet=1.0, damping_outlet=1.0)


#: PASS/FAIL lines appended by the acceptance suite, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
