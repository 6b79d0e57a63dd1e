import numpy as np
import pytest

from orthgp.bases import InducingSets, OrthogonalParams
from orthgp.kernels import Kernel

# a Matern amplitude this small leaves a pure RBF kernel in double precision
TINY = 1e-300


def rbf_only(lengthscale=1.0, amplitude=1.0):
    return Kernel(amplitude, lengthscale, TINY, 1.0)


def matern_only(lengthscale=1.0, amplitude=1.0):
    return Kernel(TINY, 1.0, amplitude, lengthscale)


def random_orthogonal(rng, n_beta, n_gamma, d=1, scale=1.0):
    beta = rng.normal(size=(n_beta, d))
    gamma = rng.normal(size=(n_gamma, d))
    inducing = InducingSets(beta, gamma)
    A = rng.normal(size=(n_beta, n_beta))
    L = np.linalg.cholesky(A @ A.T / n_beta + 0.5 * np.eye(n_beta))
    params = OrthogonalParams(scale * rng.normal(size=n_gamma), scale * rng.normal(size=n_beta), L)
    return inducing, params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def smooth_kernel():
    # well-conditioned choice for small random instances
    return Kernel(1.0, 1.0, 0.5, 0.7)
