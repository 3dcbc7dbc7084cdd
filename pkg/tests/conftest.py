"""Shared fixtures and independent oracles for the test suite."""

import numpy as np
import pytest
from scipy.linalg import eigh

import singrobin as sr


def robin_quadratic(x):
    """Closed-form solution of -u'' = 1 with u(0)-u'(0)=0, u(1)+u'(1)=0."""
    return (1.0 + x - x * x) / 2.0


def eigen_c1(n, beta, x_l=0.0, x_r=1.0):
    """Independent p = 2 oracle for the norm-equivalence constant.

    Builds the stiffness, mass and boundary matrices densely and reads the
    constant off the extreme generalized eigenvalues of the two norm forms.
    """
    h = (x_r - x_l) / n
    N = n + 1
    K = np.zeros((N, N))
    M = np.zeros((N, N))
    for e in range(n):
        i, j = e, e + 1
        K[i, i] += 1 / h
        K[j, j] += 1 / h
        K[i, j] -= 1 / h
        K[j, i] -= 1 / h
        M[i, i] += h / 3
        M[j, j] += h / 3
        M[i, j] += h / 6
        M[j, i] += h / 6
    B = np.zeros((N, N))
    B[0, 0] = 1.0
    B[-1, -1] = 1.0
    w = eigh(beta * B + K, M + K, eigvals_only=True)
    return float(min(np.sqrt(w[0]), 1.0 / np.sqrt(w[-1])))


@pytest.fixture(scope="session")
def mesh100():
    return sr.build_mesh(0.0, 1.0, 100)


@pytest.fixture(scope="session")
def mesh200():
    return sr.build_mesh(0.0, 1.0, 200)


@pytest.fixture(scope="session")
def laplace2():
    return sr.OperatorSpec("p_laplacian", 2.0)


@pytest.fixture(scope="session")
def constant_reaction():
    return sr.ReactionSpec(
        f=sr.ConvectionSpec("zero"), g=sr.SingularSpec("constant", c0=1.0)
    )


@pytest.fixture(scope="session")
def singular_reaction():
    return sr.ReactionSpec(
        f=sr.ConvectionSpec("affine", a=0.1, b=0.01, c=0.01),
        g=sr.SingularSpec("power_singular", lam=0.1, gamma=0.5),
    )


@pytest.fixture(scope="session")
def constant_instance(laplace2, constant_reaction, mesh200):
    return sr.ProblemInstance(
        operator=laplace2, reaction=constant_reaction, beta=1.0, mesh=mesh200
    )


@pytest.fixture(scope="session")
def singular_instance(laplace2, singular_reaction, mesh200):
    return sr.ProblemInstance(
        operator=laplace2, reaction=singular_reaction, beta=1.0, mesh=mesh200
    )


@pytest.fixture(scope="session")
def singular_instance_small(laplace2, singular_reaction, mesh100):
    return sr.ProblemInstance(
        operator=laplace2, reaction=singular_reaction, beta=1.0, mesh=mesh100
    )
