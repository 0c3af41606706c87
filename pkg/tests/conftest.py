import numpy as np
import pytest

from viamr.mesh import build_structured_square
from viamr.problems import ball_obstacle
from viamr.visolve import VIProblemDiscrete, solve_vi, unconstrained_start


@pytest.fixture(scope="session")
def ball():
    return ball_obstacle()


@pytest.fixture(scope="session")
def ball_solution(ball):
    """Ball problem solved on a structured 32 x 32 mesh of [-2, 2]^2."""
    mesh = build_structured_square(32, -2.0, 2.0)
    problem = VIProblemDiscrete.from_problem(mesh, ball)
    result = solve_vi(problem, unconstrained_start(problem))
    return mesh, problem, result


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
