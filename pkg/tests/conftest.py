import math

import numpy as np
import pytest

from rfheat.geometry import ManifoldModel
from rfheat.heat import initial_data, solve_fd, solve_neumann_cap
from rfheat.ricci_flow import evolve_axisym_conformal, evolve_homothetic


@pytest.fixture(scope="session")
def sphere_solution():
    """u = 2 + (1 - 2t) cos θ on the shrinking unit S², N = 128, T = 0.2."""
    model = ManifoldModel("round_sphere", 2, grid=128)
    traj = evolve_homothetic(model, 0.2)
    return solve_fd(traj, initial_data(model, "modal", [2, 1]))


@pytest.fixture(scope="session")
def torus_solution():
    """u = 1 + 0.5 e^{-t} cos x on the flat circle, N = 128, T = 1."""
    model = ManifoldModel("flat_torus", 1, grid=128)
    traj = evolve_homothetic(model, 1.0)
    return solve_fd(traj, initial_data(model, "cos", [1, 0.5, 1]))


@pytest.fixture(scope="session")
def conformal_solution():
    model = ManifoldModel("axisym_conformal_sphere", 2, grid=96)
    v0 = 0.2 * (np.cos(model.coords) ** 2 - 1 / 3)
    traj = evolve_axisym_conformal(model, v0, 0.15)
    return solve_fd(traj, initial_data(model, "modal", [2, 0.5, 0.3]))


@pytest.fixture(scope="session")
def hemisphere_solution():
    model = ManifoldModel("spherical_cap", 2, grid=64, cap_angle=math.pi / 2)
    traj = evolve_homothetic(model, 0.2)
    return solve_neumann_cap(traj, initial_data(model, "cos", [2, 1, 2]))


@pytest.fixture(scope="session")
def quarter_cap_solution():
    model = ManifoldModel("spherical_cap", 2, grid=64, cap_angle=math.pi / 4)
    traj = evolve_homothetic(model, 0.2)
    return solve_neumann_cap(traj, initial_data(model, "cos", [2, 1, 4]))


def constant_solution(model, T=0.2, value=3.0):
    traj = evolve_homothetic(model, T)
    return solve_fd(traj, np.full(model.npoints, value), outputs=21)


# one line per acceptance criterion, echoed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
