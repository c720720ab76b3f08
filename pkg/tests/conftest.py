import numpy as np
import pytest
from hypothesis import settings

from robinmc import Ball, Box, ConstantField, ProblemSpec
from robinmc.functions import constant, coordinate

settings.register_profile("repo", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def ball():
    return Ball(np.zeros(3), 1.0)


@pytest.fixture(scope="session")
def box():
    return Box(np.zeros(3), np.ones(3))


@pytest.fixture(scope="session")
def half():
    return ConstantField.isotropic(0.5)


@pytest.fixture(scope="session")
def linear_ball(ball, half):
    """a = I/2, lambda = 1, f = x_1, g = x_1: Dirichlet solution u = x_1."""
    return ProblemSpec(ball, half, 1.0, coordinate(0), coordinate(0))


def constant_problem(domain, field, lam, c):
    return ProblemSpec(domain, field, lam, constant(lam * c), constant(c))


def fibonacci_sphere(m, radius=1.0):
    """m nearly uniform points on the sphere of the given radius."""
    k = np.arange(m) + 0.5
    z = 1 - 2 * k / m
    phi = np.pi * (1 + 5**0.5) * k
    r = np.sqrt(1 - z * z)
    return radius * np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
