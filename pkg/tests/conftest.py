"""Shared fixtures: small meshes and reference solves reused across files."""

import numpy as np
import pytest

from maxsurf import SolverConfig, build_annulus, build_rectangle, solve


@pytest.fixture(scope="session")
def square16():
    return build_rectangle(1.0, 1.0, 1.0 / 16.0)


@pytest.fixture(scope="session")
def square4():
    return build_rectangle(1.0, 1.0, 0.25)


@pytest.fixture(scope="session")
def annulus_coarse():
    return build_annulus(1.0, 2.0, 0.1)


def affine_field(mesh, a, b, c=0.0):
    return a * mesh.vertices[:, 0] + b * mesh.vertices[:, 1] + c


@pytest.fixture(scope="session")
def solved_pair(square16):
    """Two distinct converged Lorentzian solutions on the same mesh."""
    v, rep = solve(square16, affine_field(square16, 0.5, 0.0))
    bc = 0.3 * np.sin(np.pi * square16.vertices[:, 0]) * square16.vertices[:, 1]
    vp, rep_p = solve(square16, bc)
    assert rep.converged and rep_p.converged
    return square16, v, vp


@pytest.fixture(scope="session")
def mse_solution(square16):
    """Converged Euclidean solution with the x^2 - y^2 boundary trace."""
    x, y = square16.vertices.T
    u, rep = solve(square16, x * x - y * y, SolverConfig(metric="euclid"))
    assert rep.converged
    return square16, u


# ----------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion in the summary
# ----------------------------------------------------------------------

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
